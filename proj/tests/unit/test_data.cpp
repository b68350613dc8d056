#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"
#include "cellprog/rng.hpp"
#include "doctest.h"
#include "tempdir.hpp"

using namespace cellprog;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

CellManifest nasa_like(const std::string& id) {
  return {id, 2.0, 1.4, 4.2, 0};
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load_cell") {
  cellprog::testing::TempDir tmp;
  write_text(tmp / "c.csv", "cycle,t,v\n0,0,3.5\n0,1,3.6\n0,2,3.7\n1,0,3.5\n1,1,3.6\n1,2,3.8\n");
  write_text(tmp / "l.csv", "cycle,capacity_ah\n0,1.9\n1,1.8\n");

  SUBCASE("two valid cycles") {
    auto cell = load_cell(tmp / "c.csv", tmp / "l.csv", nasa_like("B0005"));
    REQUIRE(cell.cycles.size() == 2);
    CHECK(cell.cycles[1].voltages == std::vector<double>{3.5, 3.6, 3.8});
    CHECK(cell.cycles[0].capacity == 1.9);
    CHECK(cell.manifest.rated_capacity_ah == 2.0);
    CHECK(cell.manifest.eol_threshold_ah == 1.4);
  }
  SUBCASE("label without samples names the cycle") {
    write_text(tmp / "l2.csv", "cycle,capacity_ah\n0,1.9\n1,1.8\n7,1.7\n");
    const auto msg = error_of([&] { load_cell(tmp / "c.csv", tmp / "l2.csv", nasa_like("X")); });
    CHECK(msg.find("cycle 7") != std::string::npos);
  }
  SUBCASE("cycle without a label names the cycle") {
    write_text(tmp / "l3.csv", "cycle,capacity_ah\n0,1.9\n");
    const auto msg = error_of([&] { load_cell(tmp / "c.csv", tmp / "l3.csv", nasa_like("X")); });
    CHECK(msg.find("cycle 1") != std::string::npos);
  }
  SUBCASE("non-monotone time names the row") {
    write_text(tmp / "c2.csv", "cycle,t,v\n0,0,3.5\n0,2,3.6\n0,1,3.7\n1,0,3.5\n1,1,3.6\n");
    const auto msg = error_of([&] { load_cell(tmp / "c2.csv", tmp / "l.csv", nasa_like("X")); });
    CHECK(msg.find("row 4") != std::string::npos);
  }
  SUBCASE("bad header") {
    write_text(tmp / "c3.csv", "cyc,t,v\n0,0,3.5\n");
    CHECK_THROWS_AS(load_cell(tmp / "c3.csv", tmp / "l.csv", nasa_like("X")), Error);
  }
  SUBCASE("manifest values stored verbatim") {
    write_text(tmp / "B0005.manifest",
               "cell_id=B0005\nrated_capacity_ah=2.0\neol_threshold_ah=1.4\nsaturation_voltage_v=4.2\ntarget_len=4000\n");
    auto m = read_manifest(tmp / "B0005.manifest");
    CHECK(m.rated_capacity_ah == 2.0);
    CHECK(m.eol_threshold_ah == 1.4);
    CHECK(m.target_len == 4000);
  }
}

TEST_CASE("write then load round-trips") {
  cellprog::testing::TempDir tmp;
  SynthOptions opt;
  opt.n_cells = 2;
  opt.n_cycles = 5;
  opt.seq_len = 40;
  for (const auto& cell : synth_cells(opt)) {
    write_cell(tmp.path(), cell);
    CHECK(load_cell_dir(tmp.path(), cell.id()) == cell);
  }
  CHECK(load_cells(tmp.path()).size() == 2);
}

TEST_CASE("interpolate_to_length") {
  CHECK(interpolate_to_length({1, 3}, 3) == std::vector<double>{1, 2, 3});
  CHECK(interpolate_to_length({1, 4, 2}, 3) == std::vector<double>{1, 4, 2});
  CHECK_THROWS_AS(interpolate_to_length({1, 2, 3}, 2), Error);
  CHECK_THROWS_AS(interpolate_to_length({1}, 4), Error);

  SUBCASE("several insertions in one gap share the neighbour mean") {
    CHECK(interpolate_to_length({0, 4}, 5) == std::vector<double>{0, 2, 2, 2, 4});
  }

  SUBCASE("property: length, order and neighbour means") {
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t target = 2 + rng.below(3999);
      const std::size_t len = 2 + rng.below(target - 1);
      std::vector<double> v(len);
      double acc = 0.0;
      for (auto& x : v) x = (acc += 0.1 + rng.uniform());  // strictly increasing
      const auto out = interpolate_to_length(v, target);
      REQUIRE(out.size() == target);
      REQUIRE(out.front() == v.front());
      REQUIRE(out.back() == v.back());
      std::size_t p = 0;
      std::vector<std::size_t> per_gap(len, 0);
      for (std::size_t k = 1; k < out.size(); ++k) {
        if (p + 1 < len && out[k] == v[p + 1]) {
          ++p;
        } else {
          REQUIRE(p + 1 < len);
          REQUIRE(out[k] == 0.5 * (v[p] + v[p + 1]));
          ++per_gap[p + 1];
        }
      }
      REQUIRE(p == len - 1);
      // Interior gaps each cover a unit-length window of insertion positions;
      // the two end gaps also absorb positions rounded to 0 or len.
      if (len >= 4) {
        const auto [lo, hi] = std::minmax_element(per_gap.begin() + 2, per_gap.end() - 1);
        CHECK(*hi - *lo <= 1);
      }
    }
  }

  SUBCASE("time axis stays strictly increasing") {
    const auto t = interpolate_times_to_length({0, 10, 20}, 9);
    REQUIRE(t.size() == 9);
    for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] > t[k - 1]);
  }
}

TEST_CASE("derive_labels") {
  CellDataset cell;
  cell.manifest = nasa_like("c");
  auto add = [&](std::int64_t i, double cap) { cell.cycles.push_back({i, {0, 1}, {3.5, 3.6}, cap}); };

  SUBCASE("crossing cell") {
    add(0, 2.0);
    add(1, 1.5);
    add(2, 1.3);
    const auto lab = derive_labels(cell);
    REQUIRE(lab.n_eol);
    CHECK(*lab.n_eol == 2);
    CHECK(lab.rul[0] == 2);
    CHECK(lab.rul[1] == 1);
    CHECK(lab.rul[2] == 0);
    CHECK(lab.soh[0] == 1.0);
    CHECK(lab.soh[1] == 1.5 / 2.0);
  }
  SUBCASE("never crossing: SOH only") {
    add(0, 1.9);
    add(1, 1.4005);
    const auto lab = derive_labels(cell);
    CHECK_FALSE(lab.has_rul());
    CHECK_FALSE(lab.rul[0].has_value());
    CHECK_FALSE(lab.rul[1].has_value());
  }
  SUBCASE("exactly at threshold is not below it") {
    add(0, 1.4);
    CHECK_FALSE(derive_labels(cell).has_rul());
  }
  SUBCASE("cycles past EOL carry no RUL and RUL counts down to zero") {
    SynthOptions opt;
    opt.n_cells = 3;
    for (const auto& c : synth_cells(opt)) {
      const auto lab = derive_labels(c);
      REQUIRE(lab.has_rul());
      for (std::size_t i = 0; i < c.cycles.size(); ++i) {
        const auto idx = c.cycles[i].cycle_index;
        if (idx < *lab.n_eol) {
          REQUIRE(lab.rul[i]);
          CHECK(*lab.rul[i] == *lab.rul[i + 1] + 1);
        } else if (idx == *lab.n_eol) {
          CHECK(lab.rul[i] == 0);
        } else {
          CHECK_FALSE(lab.rul[i].has_value());
        }
      }
    }
  }
}

TEST_CASE("extract_feature_factors") {
  SUBCASE("linear ramp slope") {
    CycleRecord c;
    for (int t = 0; t <= 60; ++t) {
      c.times.push_back(t);
      c.voltages.push_back(t <= 40 ? 3.6 + 0.01 * t : 4.0);
    }
    const auto f = extract_feature_factors(c, 4.0);
    CHECK(std::abs(f.rise_slope_v_per_s - 0.01) < 1e-9);
    CHECK_FALSE(f.slope_degenerate);
    CHECK(f.onset_to_peak_s == doctest::Approx(39.0));
  }
  SUBCASE("constant 4.0 V trace sits on the plateau") {
    CycleRecord c;
    for (int t = 0; t <= 100; ++t) {
      c.times.push_back(t);
      c.voltages.push_back(4.0);
    }
    CHECK(extract_feature_factors(c, 4.2).plateau_s == doctest::Approx(100.0));
  }
  SUBCASE("CC integral of a 4.0 V, 10 s phase") {
    CycleRecord c;
    for (int t = 0; t <= 10; ++t) {
      c.times.push_back(t);
      c.voltages.push_back(4.0);
    }
    c.times.push_back(11);
    c.voltages.push_back(4.2);
    const auto f = extract_feature_factors(c, 4.2);
    CHECK(f.cc_integral_vs == doctest::Approx(40.0));
    CHECK(f.onset_to_peak_s == 0.0);
  }
  SUBCASE("empty slope window is flagged, not fatal") {
    CycleRecord c{0, {0, 1, 2}, {3.0, 3.1, 3.2}, 1.0};
    const auto f = extract_feature_factors(c, 4.2);
    CHECK(f.slope_degenerate);
    CHECK(f.rise_slope_v_per_s == 0.0);
  }
  SUBCASE("synthetic cycles give finite, non-negative durations") {
    SynthOptions opt;
    opt.n_cells = 1;
    opt.n_cycles = 10;
    const auto cells = synth_cells(opt);
    for (const auto& c : cells[0].cycles) {
      const auto f = extract_feature_factors(c, 4.2);
      for (double x : f.as_vector()) CHECK(std::isfinite(x));
      CHECK(f.onset_to_peak_s >= 0.0);
      CHECK(f.plateau_s >= 0.0);
    }
  }
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y, z;
  for (double v : x) {
    y.push_back(2 * v + 1);
    z.push_back(-v);
  }
  CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-15));
  // mean 2 each; sxy = (-1)(-1) + 0 + (1)(0) = 1, sxx = syy = 2.
  CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), Error);

  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(3 + rng.below(20)), b;
    for (auto& v : a) v = rng.normal();
    const double slope = rng.uniform(0.1, 5.0) * (trial % 2 ? 1.0 : -1.0);
    for (double v : a) b.push_back(slope * v + rng.normal());
    const double intercept = b.back();
    b.clear();
    for (double v : a) b.push_back(slope * v + intercept);
    CHECK(std::abs(pearson(a, b) - (slope > 0 ? 1.0 : -1.0)) < 1e-12);
  }
}

TEST_CASE("synth_cells") {
  SynthOptions opt;
  CHECK(synth_cells(opt) == synth_cells(opt));
  auto other = opt;
  other.seed = opt.seed + 1;
  CHECK_FALSE(synth_cells(other) == synth_cells(opt));

  const auto cells = synth_cells(opt);
  CHECK(cells.size() == 4);
  for (const auto& cell : cells) {
    cell.validate();
    CHECK(cell.cycles.size() == 60);
    for (const auto& c : cell.cycles) CHECK(c.voltages.size() <= opt.seq_len);
  }

  SUBCASE("no regeneration: strictly decreasing capacity") {
    auto o = opt;
    o.regen_rate = 0.0;
    for (const auto& cell : synth_cells(o))
      for (std::size_t i = 1; i < cell.cycles.size(); ++i) CHECK(cell.cycles[i].capacity < cell.cycles[i - 1].capacity);
  }
  SUBCASE("increases only on regeneration cycles") {
    auto o = opt;
    o.regen_rate = 0.3;
    std::size_t ups = 0;
    for (const auto& cell : synth_cells(o))
      for (std::size_t i = 1; i < cell.cycles.size(); ++i) ups += cell.cycles[i].capacity > cell.cycles[i - 1].capacity;
    CHECK(ups > 0);
    // A cycle that increases must be followed by decreases until the next jump,
    // which the regen-free run above already pins; here just bound the count.
    CHECK(ups < 4 * 60);
  }
  SUBCASE("default corpus reaches EOL in every cell") {
    for (const auto& cell : cells) CHECK(derive_labels(cell).has_rul());
  }
  SUBCASE("alignment makes every cycle exactly seq_len long") {
    const auto aligned = align_cell(cells[0], opt.seq_len);
    for (const auto& c : aligned.cycles) {
      CHECK(c.voltages.size() == opt.seq_len);
      CHECK(c.times.size() == opt.seq_len);
    }
    aligned.validate();
  }
}
