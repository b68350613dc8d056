#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"

namespace cellprog {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw Error(ErrorCode::kData, where + ": cannot parse number '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error(ErrorCode::kData, where + ": cannot parse integer '" + s + "'");
  }
  return v;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

void expect_header(std::istream& in, const std::string& header, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != header) {
    throw Error(ErrorCode::kData, path.string() + ": expected header \"" + header + "\"");
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void CellDataset::validate() const {
  const auto& m = manifest;
  if (m.cell_id.empty()) throw Error(ErrorCode::kData, "cell has an empty id");
  if (!(m.eol_threshold_ah > 0.0 && m.eol_threshold_ah < m.rated_capacity_ah)) {
    throw Error(ErrorCode::kData, "cell " + m.cell_id + ": need 0 < eol_threshold < rated_capacity");
  }
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    const auto& c = cycles[i];
    const std::string where = "cell " + m.cell_id + " cycle " + std::to_string(c.cycle_index);
    if (i > 0 && c.cycle_index <= cycles[i - 1].cycle_index) {
      throw Error(ErrorCode::kData, where + ": cycle indices must be strictly increasing");
    }
    if (c.times.size() != c.voltages.size() || c.times.size() < 2) {
      throw Error(ErrorCode::kData, where + ": needs at least 2 samples with matching t/v counts");
    }
    for (std::size_t k = 1; k < c.times.size(); ++k) {
      if (!(c.times[k] > c.times[k - 1])) throw Error(ErrorCode::kData, where + ": time is not strictly increasing");
    }
    if (!(c.capacity > 0.0)) throw Error(ErrorCode::kData, where + ": capacity must be positive");
  }
}

CellManifest read_manifest(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kData, path.string() + ": expected key=value, got '" + t + "'");
    kv[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::kData, path.string() + ": missing key " + key);
    return it->second;
  };
  CellManifest m;
  m.cell_id = need("cell_id");
  m.rated_capacity_ah = parse_double(need("rated_capacity_ah"), path.string());
  m.eol_threshold_ah = parse_double(need("eol_threshold_ah"), path.string());
  if (kv.count("saturation_voltage_v")) m.saturation_voltage_v = parse_double(kv["saturation_voltage_v"], path.string());
  if (kv.count("target_len")) m.target_len = static_cast<std::size_t>(parse_int(kv["target_len"], path.string()));
  return m;
}

void write_manifest(const fs::path& path, const CellManifest& m) {
  auto out = open_out(path);
  out << "cell_id=" << m.cell_id << '\n'
      << "rated_capacity_ah=" << format_double(m.rated_capacity_ah) << '\n'
      << "eol_threshold_ah=" << format_double(m.eol_threshold_ah) << '\n'
      << "saturation_voltage_v=" << format_double(m.saturation_voltage_v) << '\n'
      << "target_len=" << m.target_len << '\n';
}

CellDataset load_cell(const fs::path& cycles_path, const fs::path& labels_path, const CellManifest& manifest) {
  std::map<std::int64_t, CycleRecord> by_cycle;
  {
    auto in = open_in(cycles_path);
    expect_header(in, "cycle,t,v", cycles_path);
    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (trim(line).empty()) continue;
      const std::string where = cycles_path.string() + " row " + std::to_string(row);
      const auto f = split_csv(line);
      if (f.size() != 3) throw Error(ErrorCode::kData, where + ": expected 3 fields");
      const auto cyc = parse_int(f[0], where);
      const double t = parse_double(f[1], where);
      const double v = parse_double(f[2], where);
      auto& rec = by_cycle[cyc];
      rec.cycle_index = cyc;
      if (!rec.times.empty() && !(t > rec.times.back())) {
        throw Error(ErrorCode::kData, where + ": time " + f[1] + " is not after the previous sample of cycle " +
                                          std::to_string(cyc));
      }
      rec.times.push_back(t);
      rec.voltages.push_back(v);
    }
  }
  std::map<std::int64_t, double> capacity;
  {
    auto in = open_in(labels_path);
    expect_header(in, "cycle,capacity_ah", labels_path);
    std::string line;
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (trim(line).empty()) continue;
      const std::string where = labels_path.string() + " row " + std::to_string(row);
      const auto f = split_csv(line);
      if (f.size() != 2) throw Error(ErrorCode::kData, where + ": expected 2 fields");
      const auto cyc = parse_int(f[0], where);
      if (!by_cycle.count(cyc)) {
        throw Error(ErrorCode::kData, "cell " + manifest.cell_id + ": label for cycle " + std::to_string(cyc) +
                                          " has no samples in " + cycles_path.string());
      }
      if (!capacity.emplace(cyc, parse_double(f[1], where)).second) {
        throw Error(ErrorCode::kData, where + ": duplicate label for cycle " + std::to_string(cyc));
      }
    }
  }

  CellDataset cell;
  cell.manifest = manifest;
  for (auto& [cyc, rec] : by_cycle) {
    auto it = capacity.find(cyc);
    if (it == capacity.end()) {
      throw Error(ErrorCode::kData, "cell " + manifest.cell_id + ": cycle " + std::to_string(cyc) +
                                        " has no capacity label in " + labels_path.string());
    }
    rec.capacity = it->second;
    cell.cycles.push_back(std::move(rec));
  }
  cell.validate();
  return cell;
}

CellDataset load_cell_dir(const fs::path& dir, const std::string& cell_id) {
  const auto manifest = read_manifest(dir / (cell_id + ".manifest"));
  if (manifest.cell_id != cell_id) {
    throw Error(ErrorCode::kData, "manifest for " + cell_id + " declares cell_id " + manifest.cell_id);
  }
  return load_cell(dir / (cell_id + ".cycles.csv"), dir / (cell_id + ".labels.csv"), manifest);
}

std::vector<CellDataset> load_cells(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const std::string suffix = ".manifest";
    if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw Error(ErrorCode::kData, "no *.manifest files in " + dir.string());
  std::vector<CellDataset> cells;
  for (const auto& id : ids) cells.push_back(load_cell_dir(dir, id));
  return cells;
}

void write_cell(const fs::path& dir, const CellDataset& cell) {
  cell.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  write_manifest(dir / (cell.id() + ".manifest"), cell.manifest);
  {
    auto out = open_out(dir / (cell.id() + ".cycles.csv"));
    out << "cycle,t,v\n";
    for (const auto& c : cell.cycles)
      for (std::size_t k = 0; k < c.times.size(); ++k)
        out << c.cycle_index << ',' << format_double(c.times[k]) << ',' << format_double(c.voltages[k]) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "failed writing cycles for " + cell.id());
  }
  auto out = open_out(dir / (cell.id() + ".labels.csv"));
  out << "cycle,capacity_ah\n";
  for (const auto& c : cell.cycles) out << c.cycle_index << ',' << format_double(c.capacity) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing labels for " + cell.id());
}

}  // namespace cellprog
