// Batch front end: synth, preprocess, train, evaluate, search, features.
//
// Every command writes <out>/run_manifest.txt before doing any work and
// reports failures on stderr as a single "E:<code>:<message>" line.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cellprog/checkpoint.hpp"
#include "cellprog/data.hpp"
#include "cellprog/error.hpp"
#include "cellprog/hsearch.hpp"
#include "cellprog/kvtext.hpp"
#include "cellprog/metrics.hpp"
#include "cellprog/model.hpp"
#include "cellprog/train.hpp"

namespace fs = std::filesystem;
using namespace cellprog;

namespace {

struct RunManifest {
  std::string command;
  std::string argv;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> inputs;  // role, path
  std::string out;

  std::string to_text() const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream os;
    os << "command=" << command << '\n';
    os << "argv=" << argv << '\n';
    os << "seed=" << (seed ? std::to_string(*seed) : std::string("none")) << '\n';
    for (const auto& [role, path] : inputs) os << role << '=' << path << '\n';
    os << "out=" << out << '\n';
    os << "timestamp=" << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    return os.str();
  }

  void write() const {
    fs::create_directories(out);
    write_text_file(fs::path(out) / "run_manifest.txt", to_text());
  }
};

std::string quote_arg(const std::string& a) {
  if (!a.empty() && a.find_first_of(" \t\"'\\$") == std::string::npos) return a;
  std::string q = "'";
  for (char c : a) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string joined_argv(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + quote_arg(argv[i]);
  return s;
}

std::size_t threads_from_env() {
  const char* raw = std::getenv("CELLPROG_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1) throw Error(ErrorCode::kUsage, std::string("CELLPROG_THREADS must be a positive integer, got '") + raw + "'");
  return static_cast<std::size_t>(v);
}

std::size_t sequence_length(const std::vector<CellDataset>& cells) {
  for (const auto& c : cells) {
    if (!c.cycles.empty()) return c.cycles.front().voltages.size();
  }
  throw Error(ErrorCode::kData, "data set has no cycles");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 7;
  std::size_t cells = 4;
  std::size_t cycles = 60;
  std::size_t seq_len = 200;
  std::string out;
};

void run_synth(const SynthArgs& a, RunManifest m) {
  m.seed = a.seed;
  m.write();
  SynthOptions opt;
  opt.seed = a.seed;
  opt.n_cells = a.cells;
  opt.n_cycles = a.cycles;
  opt.seq_len = a.seq_len;
  for (const auto& cell : synth_cells(opt)) write_cell(a.out, cell);
  std::cout << "wrote " << a.cells << " cells x " << a.cycles << " cycles to " << a.out << '\n';
}

// ---- preprocess -------------------------------------------------------------

struct PreprocessArgs {
  std::string in;
  std::size_t target_len = 0;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void run_preprocess(const PreprocessArgs& a, RunManifest m) {
  m.seed = a.seed;
  m.inputs = {{"in", a.in}};
  m.write();
  const auto cells = load_cells(a.in);
  for (const auto& cell : cells) {
    auto aligned = align_cell(cell, a.target_len);
    aligned.manifest.target_len = a.target_len;
    write_cell(a.out, aligned);
  }
  std::cout << "aligned " << cells.size() << " cells to " << a.target_len << " points\n";
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::vector<std::string> hold_out;
  std::int64_t oc = 0;
  std::string model_cfg;
  std::string train_cfg;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a, RunManifest m) {
  TrainConfig tcfg = a.train_cfg.empty() ? TrainConfig{} : TrainConfig::load(a.train_cfg);
  if (a.seed) tcfg.seed = *a.seed;
  m.seed = tcfg.seed;
  m.inputs = {{"data", a.data}, {"model_cfg", a.model_cfg}, {"train_cfg", a.train_cfg}};
  m.write();

  const auto cells = load_cells(a.data);
  ModelConfig mcfg;
  if (a.model_cfg.empty()) {
    mcfg.seq_len = sequence_length(cells);
  } else {
    mcfg = ModelConfig::load(a.model_cfg);
  }
  const auto split = partition(cells, a.hold_out, a.oc);
  std::cout << "train:";
  for (const auto& c : split.train) std::cout << ' ' << c.id();
  std::cout << " | test:";
  for (const auto& c : split.test) std::cout << ' ' << c.id();
  std::cout << " | oc " << a.oc << '\n';

  const auto res = train_run(split.train, mcfg, tcfg, fs::path(a.out));
  std::cout << "epochs " << res.log.epochs.size() << ", best epoch " << res.best_epoch << ", best loss "
            << format_double(res.best_loss) << ", final loss " << format_double(res.log.epochs.back().loss) << '\n';
}

// ---- evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::int64_t oc = 0;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void write_cell_outputs(const fs::path& out, const CellPredictions& p) {
  std::ostringstream pred;
  pred << "cycle,soh_hat,rul_hat\n";
  for (std::size_t i = 0; i < p.cycles.size(); ++i) {
    pred << p.cycles[i] << ',' << format_double(p.soh_hat[i]) << ',' << format_double(p.rul_hat[i]) << '\n';
  }
  write_text_file(out / (p.cell_id + ".predictions.csv"), pred.str());

  const auto soh_err = soh_error_series(p.capacity_true, p.capacity_hat);
  std::ostringstream soh;
  soh << "cycle,capacity_real,capacity_pre,soh_error_pct\n";
  for (std::size_t i = 0; i < p.cycles.size(); ++i) {
    soh << p.cycles[i] << ',' << format_double(p.capacity_true[i]) << ',' << format_double(p.capacity_hat[i]) << ','
        << format_double(soh_err[i]) << '\n';
  }
  write_text_file(out / (p.cell_id + ".soh_error.csv"), soh.str());

  if (!p.has_rul) return;
  std::ostringstream rul;
  rul << "cycle,rul_real,rul_pre,rul_error\n";
  for (std::size_t i = 0; i < p.cycles.size(); ++i) {
    if (!p.rul_true[i]) continue;
    const double err = rul_error_series({*p.rul_true[i]}, {p.rul_hat[i]})[0];
    rul << p.cycles[i] << ',' << format_double(*p.rul_true[i]) << ',' << format_double(p.rul_hat[i]) << ','
        << format_double(err) << '\n';
  }
  write_text_file(out / (p.cell_id + ".rul_error.csv"), rul.str());
}

void run_evaluate(const EvaluateArgs& a, RunManifest m) {
  const fs::path model_path = fs::path(a.checkpoint).parent_path() / "model.cfg";
  m.seed = a.seed;
  m.inputs = {{"checkpoint", a.checkpoint}, {"model_cfg", model_path.string()}, {"data", a.data}};
  m.write();

  const auto mcfg = ModelConfig::load(model_path);
  ParamStore params;
  Rng init_rng(0);
  model_init(params, mcfg, init_rng);
  assign_params(params, load_checkpoint(a.checkpoint));

  std::vector<MetricsReport> reports;
  for (const auto& cell : load_cells(a.data)) {
    const auto p = predict_cell(cell, params, mcfg, a.oc);
    write_cell_outputs(a.out, p);
    reports.push_back(compute_metrics(p.soh_true, p.soh_hat, Task::kSoh, cell.id()));
    if (p.has_rul) {
      std::vector<double> real, pre;
      for (std::size_t i = 0; i < p.cycles.size(); ++i) {
        if (!p.rul_true[i]) continue;
        real.push_back(*p.rul_true[i]);
        pre.push_back(p.rul_hat[i]);
      }
      if (!real.empty()) reports.push_back(compute_metrics(real, pre, Task::kRul, cell.id()));
    }
  }
  const auto csv = metrics_csv(reports);
  write_text_file(fs::path(a.out) / "metrics.csv", csv);
  std::cout << csv;
}

// ---- search ---------------------------------------------------------------------

struct SearchArgs {
  std::string space;
  std::size_t budget = 20;
  std::string data;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t epochs = 10;
  bool tpe = false;
};

TrainConfig proxy_train_config(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.warmup_epochs = std::min(t.warmup_epochs, epochs - 1);
  return t;
}

double held_out_loss(const CellDataset& cell, const TrainResult& res) {
  NoGradGuard guard;
  std::vector<ModelOutput> outs;
  std::vector<Target> targets;
  for (const auto& s : make_samples(cell, res.model.rul_scale)) {
    outs.push_back(model_forward_graph(Tensor::from({s.voltages.size(), 1}, s.voltages), res.params, res.model,
                                       res.model.attention_seed));
    targets.push_back(s.target);
  }
  return joint_loss(outs, targets, res.model.rul_weight).item();
}

void run_search(const SearchArgs& a, RunManifest m) {
  if (a.epochs < 1) throw Error(ErrorCode::kUsage, "search: --epochs must be at least 1");
  m.seed = a.seed;
  m.inputs = {{"space", a.space}, {"data", a.data}};
  m.write();

  const auto space = a.space.empty() ? SearchSpace::defaults() : SearchSpace::parse(read_text_file(a.space));
  const auto cells = load_cells(a.data);
  if (cells.size() < 2) throw Error(ErrorCode::kData, "search needs at least two cells, one is held out");
  const std::vector<CellDataset> train_cells(cells.begin(), cells.end() - 1);
  const CellDataset& test_cell = cells.back();
  ModelConfig base_model;
  base_model.seq_len = sequence_length(cells);

  SearchOptions opt;
  opt.budget = a.budget;
  opt.seed = a.seed;
  opt.tpe = a.tpe;
  opt.threads = threads_from_env();
  std::cout << "search: " << a.budget << " trials, " << a.epochs << " epochs each, held-out cell " << test_cell.id()
            << '\n';

  const auto result = search(space, opt, [&](const SearchConfig& config, std::uint64_t seed) {
    ModelConfig mcfg = base_model;
    TrainConfig tcfg = proxy_train_config(a.epochs);
    apply_search_config(config, mcfg, tcfg);
    tcfg.seed = seed;
    return held_out_loss(test_cell, train_run(train_cells, mcfg, tcfg));
  });

  const fs::path out(a.out);
  write_text_file(out / "trials.csv", trials_csv(result.trials));
  const auto& best = result.best();
  ModelConfig best_model = base_model;
  TrainConfig best_train;
  apply_search_config(best.config, best_model, best_train);
  best_train.seed = best.seed;
  best_model.save(out / "best_model.cfg");
  best_train.save(out / "best_train.cfg");
  write_text_file(out / "best.json", best.config.dump(2) + "\n");
  std::cout << "best trial " << best.index << " objective " << format_double(best.objective) << ' '
            << best.config.dump() << '\n';
}

// ---- features -------------------------------------------------------------------

struct FeaturesArgs {
  std::string in;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void run_features(const FeaturesArgs& a, RunManifest m) {
  m.seed = a.seed;
  m.inputs = {{"in", a.in}};
  m.write();

  static const char* kNames[] = {"onset_to_peak_s", "plateau_s", "rise_slope_v_per_s", "cc_integral_vs"};
  std::ostringstream factors, table;
  factors << "cell,cycle";
  for (const char* n : kNames) factors << ',' << n;
  factors << ",capacity_ah\n";
  table << "cell,feature,pearson\n";

  for (const auto& cell : load_cells(a.in)) {
    std::vector<std::vector<double>> columns(FeatureFactors::kCount);
    std::vector<double> capacity;
    std::size_t degenerate = 0;
    for (const auto& cycle : cell.cycles) {
      const auto f = extract_feature_factors(cycle, cell.manifest.saturation_voltage_v);
      degenerate += f.slope_degenerate ? 1 : 0;
      const auto v = f.as_vector();
      factors << cell.id() << ',' << cycle.cycle_index;
      for (std::size_t k = 0; k < v.size(); ++k) {
        factors << ',' << format_double(v[k]);
        columns[k].push_back(v[k]);
      }
      factors << ',' << format_double(cycle.capacity) << '\n';
      capacity.push_back(cycle.capacity);
    }
    if (degenerate > 0) {
      std::cerr << "W:data:cell " << cell.id() << ": " << degenerate
                << " cycles have fewer than 2 samples in the slope window, slope set to 0\n";
    }
    auto correlate = [&](const std::string& name, const std::vector<double>& x) {
      table << cell.id() << ',' << name << ',';
      try {
        table << format_double(pearson(x, capacity));
      } catch (const Error& e) {
        std::cerr << "W:" << error_tag(e.code()) << ":cell " << cell.id() << " feature " << name << ": " << e.what()
                  << '\n';
      }
      table << '\n';
    };
    for (std::size_t k = 0; k < FeatureFactors::kCount; ++k) correlate(kNames[k], columns[k]);
    correlate("capacity_ah", capacity);
  }
  write_text_file(fs::path(a.out) / "features.csv", factors.str());
  write_text_file(fs::path(a.out) / "pearson.csv", table.str());
  std::cout << table.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellprog: battery SOH/RUL prognostics"};
  app.require_subcommand(1);
  RunManifest manifest;
  manifest.argv = joined_argv(argc, argv);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic degradation corpus");
  c_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--cells", synth.cells, "Number of cells")->capture_default_str()->check(CLI::PositiveNumber);
  c_synth->add_option("--cycles", synth.cycles, "Cycles per cell")->capture_default_str()->check(CLI::PositiveNumber);
  c_synth->add_option("--seq-len", synth.seq_len, "Maximum samples per cycle")->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Align every cycle to a fixed length");
  c_pre->add_option("--in", pre.in, "Input data directory")->required();
  c_pre->add_option("--target-len", pre.target_len, "Points per cycle")->required();
  c_pre->add_option("--out", pre.out, "Output directory")->required();
  c_pre->add_option("--seed", pre.seed, "Accepted for uniformity; preprocessing is deterministic");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train on all cells except the held-out ones");
  c_train->add_option("--data", train.data, "Aligned data directory")->required();
  c_train->add_option("--hold-out", train.hold_out, "Held-out cell ids")->delimiter(',');
  c_train->add_option("--oc", train.oc, "Observation cycle")->capture_default_str();
  c_train->add_option("--model-cfg", train.model_cfg, "Model config file");
  c_train->add_option("--train-cfg", train.train_cfg, "Training config file");
  c_train->add_option("--out", train.out, "Run directory")->required();
  c_train->add_option("--seed", train.seed, "Overrides the training config seed");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Predict and score cells from the observation cycle on");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint with model.cfg beside it")->required();
  c_eval->add_option("--data", eval.data, "Aligned data directory")->required();
  c_eval->add_option("--oc", eval.oc, "Observation cycle")->capture_default_str();
  c_eval->add_option("--out", eval.out, "Report directory")->required();
  c_eval->add_option("--seed", eval.seed, "Accepted for uniformity; attention sampling uses the model config seed");

  SearchArgs srch;
  auto* c_search = app.add_subcommand("search", "Hyperparameter search scored on the last cell");
  c_search->add_option("--space", srch.space, "Search space file (built-in space if omitted)");
  c_search->add_option("--budget", srch.budget, "Number of trials")->capture_default_str();
  c_search->add_option("--data", srch.data, "Aligned data directory")->required();
  c_search->add_option("--out", srch.out, "Output directory")->required();
  c_search->add_option("--seed", srch.seed, "Search seed")->capture_default_str();
  c_search->add_option("--epochs", srch.epochs, "Training epochs per trial")->capture_default_str();
  c_search->add_flag("--tpe", srch.tpe, "Refine the second half of the budget with TPE-lite");

  FeaturesArgs feat;
  auto* c_feat = app.add_subcommand("features", "Charge-curve feature factors and their capacity correlation");
  c_feat->add_option("--in", feat.in, "Data directory")->required();
  c_feat->add_option("--out", feat.out, "Output directory")->required();
  c_feat->add_option("--seed", feat.seed, "Accepted for uniformity; feature extraction is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "E:usage:" << e.what() << '\n';
    return 2;
  }

  try {
    auto ran = [&](CLI::App* sub, const std::string& out) {
      if (!sub->parsed()) return false;
      manifest.command = sub->get_name();
      manifest.out = out;
      return true;
    };
    if (ran(c_synth, synth.out)) run_synth(synth, manifest);
    else if (ran(c_pre, pre.out)) run_preprocess(pre, manifest);
    else if (ran(c_train, train.out)) run_train(train, manifest);
    else if (ran(c_eval, eval.out)) run_evaluate(eval, manifest);
    else if (ran(c_search, srch.out)) run_search(srch, manifest);
    else if (ran(c_feat, feat.out)) run_features(feat, manifest);
  } catch (const Error& e) {
    std::cerr << "E:" << error_tag(e.code()) << ':' << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "E:io:" << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E:internal:" << e.what() << '\n';
    return 1;
  }
  return 0;
}
