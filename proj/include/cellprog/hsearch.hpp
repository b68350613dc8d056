#pragma once

// Hyperparameter search: random sampling over a declared space with an
// optional TPE-lite phase, ranked by (objective, trial index).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cellprog/model.hpp"
#include "cellprog/rng.hpp"
#include "cellprog/train.hpp"

namespace cellprog {

using SearchConfig = nlohmann::ordered_json;

struct Dimension {
  enum class Kind { kCategorical, kLogUniform, kIntUniform };

  std::string name;
  Kind kind = Kind::kCategorical;
  std::vector<nlohmann::json> choices;  // categorical
  double lo = 0.0, hi = 0.0;            // log-uniform / integer-uniform, inclusive

  static Dimension categorical(std::string name, std::vector<nlohmann::json> choices);
  static Dimension log_uniform(std::string name, double lo, double hi);
  static Dimension int_uniform(std::string name, std::int64_t lo, std::int64_t hi);
};

struct SearchSpace {
  std::vector<Dimension> dims;

  /// Throws ErrorCode::kConfig on an empty dimension, unordered bounds,
  /// non-positive log bounds or a duplicate name.
  void validate() const;

  /// key=value lines: "name=categorical:a,b,...", "name=loguniform:lo,hi"
  /// or "name=int:lo,hi". Categorical entries that parse as numbers are numbers.
  static SearchSpace parse(const std::string& text);
  /// F in {32,64}, H in {64,128}, base_lr log-uniform [1e-5,1e-3],
  /// ffn_hidden integer-uniform [32,128].
  static SearchSpace defaults();
};

/// One independent draw per dimension.
SearchConfig sample(const SearchSpace& space, Rng& rng);

struct Trial {
  std::size_t index = 0;
  SearchConfig config;
  double objective = 0.0;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or "failed: <reason>"

  bool ok() const { return status == "ok"; }
};

struct SearchOptions {
  std::size_t budget = 20;
  std::uint64_t seed = 1;
  bool tpe = false;         // second half of the budget samples from the good/bad density ratio
  std::size_t threads = 1;  // concurrent trials during the random phase
};

/// Objective to minimize; exceptions and non-finite values mark the trial failed.
using Objective = std::function<double(const SearchConfig& config, std::uint64_t seed)>;

struct SearchResult {
  std::vector<Trial> trials;  // in run order
  std::vector<Trial> ranked;  // completed trials by (objective, index)

  const Trial& best() const { return ranked.front(); }
};

/// Throws ErrorCode::kUsage for budget 0 and ErrorCode::kSearch, with every
/// trial's failure reason, when no trial completes.
SearchResult search(const SearchSpace& space, const SearchOptions& options, const Objective& objective);

/// "trial,config_json,objective,seed,status" plus one row per trial.
std::string trials_csv(const std::vector<Trial>& trials);

/// Writes each config entry onto the matching ModelConfig or TrainConfig key.
/// Throws ErrorCode::kConfig for a key that belongs to neither.
void apply_search_config(const SearchConfig& config, ModelConfig& model, TrainConfig& train);

}  // namespace cellprog
