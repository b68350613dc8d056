#include "cellprog/hsearch.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"
#include "cellprog/kvtext.hpp"

namespace cellprog {

namespace {

constexpr std::uint64_t kSampleStream = 0x5ea;
constexpr std::size_t kTpeCandidates = 24;
constexpr double kGoodFraction = 0.25;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

nlohmann::json parse_choice(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v)) {
    if (v == std::floor(v) && std::abs(v) < 9e15) return static_cast<std::int64_t>(v);
    return v;
  }
  return s;
}

// Position of a value on the dimension's sampling axis.
double axis_value(const Dimension& d, const nlohmann::json& v) {
  const double x = v.get<double>();
  return d.kind == Dimension::Kind::kLogUniform ? std::log(x) : x;
}

std::pair<double, double> axis_bounds(const Dimension& d) {
  if (d.kind == Dimension::Kind::kLogUniform) return {std::log(d.lo), std::log(d.hi)};
  return {d.lo, d.hi};
}

nlohmann::json from_axis(const Dimension& d, double u) {
  if (d.kind == Dimension::Kind::kLogUniform) return std::exp(u);
  return static_cast<std::int64_t>(std::llround(u));
}

nlohmann::json sample_dimension(const Dimension& d, Rng& rng) {
  switch (d.kind) {
    case Dimension::Kind::kCategorical:
      return d.choices[static_cast<std::size_t>(rng.below(d.choices.size()))];
    case Dimension::Kind::kLogUniform:
      return std::exp(rng.uniform(std::log(d.lo), std::log(d.hi)));
    case Dimension::Kind::kIntUniform: {
      const auto lo = static_cast<std::int64_t>(d.lo), hi = static_cast<std::int64_t>(d.hi);
      return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
  }
  return nullptr;
}

// Parzen estimate on the sampling axis: Gaussian kernels at the observed
// points mixed with a uniform prior of weight 1/(n+1).
double parzen_density(const std::vector<double>& points, double u, double lo, double hi, double bw) {
  const double width = hi - lo;
  const double prior = width > 0.0 ? 1.0 / width : 1.0;
  const double n = static_cast<double>(points.size());
  double s = 0.0;
  for (double p : points) {
    const double z = (u - p) / bw;
    s += std::exp(-0.5 * z * z) / (bw * std::sqrt(2.0 * 3.141592653589793));
  }
  return (s + prior) / (n + 1.0);
}

nlohmann::json tpe_dimension(const Dimension& d, const std::vector<nlohmann::json>& good,
                             const std::vector<nlohmann::json>& bad, Rng& rng) {
  if (d.kind == Dimension::Kind::kCategorical) {
    const std::size_t k = d.choices.size();
    auto weights = [&](const std::vector<nlohmann::json>& obs) {
      std::vector<double> w(k, 1.0);
      for (const auto& o : obs)
        for (std::size_t c = 0; c < k; ++c)
          if (d.choices[c] == o) w[c] += 1.0;
      const double total = static_cast<double>(obs.size() + k);
      for (auto& e : w) e /= total;
      return w;
    };
    const auto wg = weights(good), wb = weights(bad);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t t = 0; t < kTpeCandidates; ++t) {
      double r = rng.uniform();
      std::size_t c = 0;
      while (c + 1 < k && r >= wg[c]) r -= wg[c++];
      const double score = wg[c] / wb[c];
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    return d.choices[best];
  }
  const auto [lo, hi] = axis_bounds(d);
  std::vector<double> g, b;
  for (const auto& v : good) g.push_back(axis_value(d, v));
  for (const auto& v : bad) b.push_back(axis_value(d, v));
  const double width = std::max(hi - lo, 1e-12);
  const double bw_g = width / std::sqrt(static_cast<double>(g.size()) + 1.0);
  const double bw_b = width / std::sqrt(static_cast<double>(b.size()) + 1.0);
  double best_u = lo, best_score = -1.0;
  for (std::size_t t = 0; t < kTpeCandidates; ++t) {
    const double centre = g[static_cast<std::size_t>(rng.below(g.size()))];
    const double u = std::clamp(centre + bw_g * rng.normal(), lo, hi);
    const double score = parzen_density(g, u, lo, hi, bw_g) / parzen_density(b, u, lo, hi, bw_b);
    if (score > best_score) {
      best_score = score;
      best_u = u;
    }
  }
  return from_axis(d, best_u);
}

SearchConfig tpe_sample(const SearchSpace& space, const std::vector<Trial>& done, Rng& rng) {
  std::vector<const Trial*> ok;
  for (const auto& t : done)
    if (t.ok()) ok.push_back(&t);
  if (ok.size() < 2) return sample(space, rng);
  std::sort(ok.begin(), ok.end(), [](const Trial* a, const Trial* b) {
    return a->objective < b->objective || (a->objective == b->objective && a->index < b->index);
  });
  const auto n_good = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(kGoodFraction * ok.size())));
  SearchConfig config = SearchConfig::object();
  for (const auto& d : space.dims) {
    std::vector<nlohmann::json> good, bad;
    for (std::size_t i = 0; i < ok.size(); ++i) (i < n_good ? good : bad).push_back(ok[i]->config.at(d.name));
    config[d.name] = tpe_dimension(d, good, bad, rng);
  }
  return config;
}

Trial run_trial(std::size_t index, SearchConfig config, std::uint64_t seed, const Objective& objective) {
  Trial t;
  t.index = index;
  t.config = std::move(config);
  t.seed = seed;
  try {
    t.objective = objective(t.config, seed);
    t.status = std::isfinite(t.objective) ? "ok" : "failed: objective is not finite";
  } catch (const std::exception& e) {
    t.objective = std::numeric_limits<double>::quiet_NaN();
    t.status = std::string("failed: ") + e.what();
  }
  return t;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string value_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return format_double(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  throw Error(ErrorCode::kConfig, "search config: unsupported value " + v.dump());
}

}  // namespace

Dimension Dimension::categorical(std::string name, std::vector<nlohmann::json> choices) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::kCategorical;
  d.choices = std::move(choices);
  return d;
}

Dimension Dimension::log_uniform(std::string name, double lo, double hi) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::kLogUniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Dimension Dimension::int_uniform(std::string name, std::int64_t lo, std::int64_t hi) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::kIntUniform;
  d.lo = static_cast<double>(lo);
  d.hi = static_cast<double>(hi);
  return d;
}

void SearchSpace::validate() const {
  if (dims.empty()) throw Error(ErrorCode::kConfig, "search space: no dimensions");
  std::set<std::string> names;
  for (const auto& d : dims) {
    if (d.name.empty() || !names.insert(d.name).second) {
      throw Error(ErrorCode::kConfig, "search space: empty or duplicate dimension name '" + d.name + "'");
    }
    switch (d.kind) {
      case Dimension::Kind::kCategorical:
        if (d.choices.empty()) throw Error(ErrorCode::kConfig, "search space: " + d.name + " has no choices");
        break;
      case Dimension::Kind::kLogUniform:
        if (!(d.lo > 0.0) || !(d.lo <= d.hi)) {
          throw Error(ErrorCode::kConfig, "search space: " + d.name + " needs 0 < lo <= hi");
        }
        break;
      case Dimension::Kind::kIntUniform:
        if (!(d.lo <= d.hi) || d.lo != std::floor(d.lo) || d.hi != std::floor(d.hi)) {
          throw Error(ErrorCode::kConfig, "search space: " + d.name + " needs integer lo <= hi");
        }
        break;
    }
  }
}

SearchSpace SearchSpace::parse(const std::string& text) {
  SearchSpace space;
  std::istringstream in(text);
  std::string line;
  // parse_key_values sorts by key; keep the file's order instead.
  const auto kv = parse_key_values(text, "search space");
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto b = key.find_first_not_of(" \t"), e = key.find_last_not_of(" \t");
    if (b != std::string::npos && key[b] != '#') order.push_back(key.substr(b, e - b + 1));
  }
  for (const auto& name : order) {
    const auto& definition = kv.at(name);
    const auto colon = definition.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::kConfig, "search space: " + name + " needs kind:values, got '" + definition + "'");
    }
    const auto kind = definition.substr(0, colon);
    const auto parts = split_commas(definition.substr(colon + 1));
    if (kind == "categorical") {
      std::vector<nlohmann::json> choices;
      for (const auto& p : parts)
        if (!p.empty()) choices.push_back(parse_choice(p));
      space.dims.push_back(Dimension::categorical(name, std::move(choices)));
    } else if (kind == "loguniform" || kind == "int") {
      if (parts.size() != 2) throw Error(ErrorCode::kConfig, "search space: " + name + " needs lo,hi");
      const double lo = kv_double(name, parts[0], "search space");
      const double hi = kv_double(name, parts[1], "search space");
      if (kind == "loguniform") {
        space.dims.push_back(Dimension::log_uniform(name, lo, hi));
      } else {
        if (lo != std::floor(lo) || hi != std::floor(hi)) {
          throw Error(ErrorCode::kConfig, "search space: " + name + " bounds must be integers");
        }
        space.dims.push_back(
            Dimension::int_uniform(name, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
      }
    } else {
      throw Error(ErrorCode::kConfig, "search space: unknown kind '" + kind + "' for " + name);
    }
  }
  space.validate();
  return space;
}

SearchSpace SearchSpace::defaults() {
  SearchSpace s;
  s.dims.push_back(Dimension::categorical("fem_channels", {32, 64}));
  s.dims.push_back(Dimension::categorical("lstm_hidden", {64, 128}));
  s.dims.push_back(Dimension::log_uniform("base_lr", 1e-5, 1e-3));
  s.dims.push_back(Dimension::int_uniform("ffn_hidden", 32, 128));
  return s;
}

SearchConfig sample(const SearchSpace& space, Rng& rng) {
  SearchConfig config = SearchConfig::object();
  for (const auto& d : space.dims) config[d.name] = sample_dimension(d, rng);
  return config;
}

SearchResult search(const SearchSpace& space, const SearchOptions& options, const Objective& objective) {
  space.validate();
  if (options.budget == 0) throw Error(ErrorCode::kUsage, "search: budget must be at least 1");
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  const std::size_t n_random = options.tpe ? std::max<std::size_t>(1, options.budget / 2) : options.budget;
  Rng rng(mix_seed(options.seed, kSampleStream));
  auto trial_seed = [&](std::size_t i) { return mix_seed(options.seed, i + 1); };

  SearchResult result;
  // Random phase: configs are drawn in index order, so the sequence does not
  // depend on how many trials run at once.
  std::vector<SearchConfig> configs;
  for (std::size_t i = 0; i < n_random; ++i) configs.push_back(sample(space, rng));
  for (std::size_t begin = 0; begin < n_random; begin += threads) {
    const std::size_t end = std::min(n_random, begin + threads);
    if (end - begin == 1) {
      result.trials.push_back(run_trial(begin, configs[begin], trial_seed(begin), objective));
      continue;
    }
    std::vector<std::future<Trial>> running;
    for (std::size_t i = begin; i < end; ++i) {
      running.push_back(std::async(std::launch::async, run_trial, i, configs[i], trial_seed(i), std::cref(objective)));
    }
    for (auto& f : running) result.trials.push_back(f.get());
  }
  for (std::size_t i = n_random; i < options.budget; ++i) {
    result.trials.push_back(run_trial(i, tpe_sample(space, result.trials, rng), trial_seed(i), objective));
  }

  for (const auto& t : result.trials)
    if (t.ok()) result.ranked.push_back(t);
  if (result.ranked.empty()) {
    std::string diag;
    for (const auto& t : result.trials) diag += "; trial " + std::to_string(t.index) + ": " + t.status;
    throw Error(ErrorCode::kSearch, "search: all " + std::to_string(result.trials.size()) + " trials failed" + diag);
  }
  std::stable_sort(result.ranked.begin(), result.ranked.end(), [](const Trial& a, const Trial& b) {
    return a.objective < b.objective || (a.objective == b.objective && a.index < b.index);
  });
  return result;
}

std::string trials_csv(const std::vector<Trial>& trials) {
  std::ostringstream out;
  out << "trial,config_json,objective,seed,status\n";
  for (const auto& t : trials) {
    out << t.index << ',' << csv_quote(t.config.dump()) << ',' << (t.ok() ? format_double(t.objective) : "nan") << ','
        << t.seed << ',' << csv_quote(t.status) << '\n';
  }
  return out.str();
}

void apply_search_config(const SearchConfig& config, ModelConfig& model, TrainConfig& train) {
  auto model_kv = parse_key_values(model.to_text(), "model config");
  auto train_kv = parse_key_values(train.to_text(), "train config");
  for (const auto& [key, value] : config.items()) {
    if (model_kv.count(key)) model_kv[key] = value_text(value);
    else if (train_kv.count(key)) train_kv[key] = value_text(value);
    else throw Error(ErrorCode::kConfig, "search config: '" + key + "' is neither a model nor a train setting");
  }
  auto render = [](const std::map<std::string, std::string>& kv) {
    std::string s;
    for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
    return s;
  };
  model = ModelConfig::from_text(render(model_kv));
  train = TrainConfig::from_text(render(train_kv));
}

}  // namespace cellprog
