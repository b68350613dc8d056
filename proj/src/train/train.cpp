#include "cellprog/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "cellprog/adam.hpp"
#include "cellprog/checkpoint.hpp"
#include "cellprog/error.hpp"
#include "cellprog/kvtext.hpp"
#include "cellprog/rng.hpp"

namespace cellprog {

namespace {

const std::string kWhat = "train config";

// Stream tags for mix_seed so that initialization and shuffling draw from
// independent generators.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;

struct BatchStats {
  double loss = 0.0, soh = 0.0, rul = 0.0;
};

// Backpropagates one sample's share of the batch joint loss: the SOH term is
// averaged over the batch and the RUL term over the batch's labelled samples,
// so summing the shares over the batch gives joint_loss exactly.
BatchStats backprop_sample(const ModelOutput& out, const Target& target, std::size_t batch_size,
                           std::size_t rul_count, double rul_weight) {
  BatchStats s;
  const double ds = out.soh.item() - target.soh;
  s.soh = ds * ds / static_cast<double>(batch_size);
  Tensor loss = scale(square(add_scalar(out.soh, -target.soh)), 1.0 / static_cast<double>(batch_size));
  if (target.rul_norm) {
    const double dr = out.rul_norm.item() - *target.rul_norm;
    s.rul = dr * dr / static_cast<double>(rul_count);
    loss = add(loss, scale(square(add_scalar(out.rul_norm, -*target.rul_norm)),
                           rul_weight / static_cast<double>(rul_count)));
  }
  s.loss = s.soh + rul_weight * s.rul;
  backward(loss);
  return s;
}

std::string join_indices(const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? "," : "") + std::to_string(idx[i]);
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw Error(ErrorCode::kConfig, "train config: epochs and batch_size must be positive");
  if (warmup_epochs >= epochs) throw Error(ErrorCode::kConfig, "train config: warmup_epochs must be below epochs");
  if (!(base_lr > 0.0) || !(decay > 0.0) || !(grad_clip_norm >= 0.0)) {
    throw Error(ErrorCode::kConfig, "train config: base_lr and decay must be positive, grad_clip_norm >= 0");
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "epochs=" << epochs << '\n'
      << "batch_size=" << batch_size << '\n'
      << "base_lr=" << format_double(base_lr) << '\n'
      << "warmup_epochs=" << warmup_epochs << '\n'
      << "decay=" << format_double(decay) << '\n'
      << "grad_clip_norm=" << format_double(grad_clip_norm) << '\n'
      << "seed=" << seed << '\n';
  return out.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  for (const auto& [key, value] : parse_key_values(text, kWhat)) {
    if (key == "epochs") c.epochs = kv_uint(key, value, kWhat);
    else if (key == "batch_size") c.batch_size = kv_uint(key, value, kWhat);
    else if (key == "base_lr") c.base_lr = kv_double(key, value, kWhat);
    else if (key == "warmup_epochs") c.warmup_epochs = kv_uint(key, value, kWhat);
    else if (key == "decay") c.decay = kv_double(key, value, kWhat);
    else if (key == "grad_clip_norm") c.grad_clip_norm = kv_double(key, value, kWhat);
    else if (key == "seed") c.seed = kv_uint(key, value, kWhat);
    else throw Error(ErrorCode::kConfig, "train config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void TrainConfig::save(const std::filesystem::path& path) const { write_text_file(path, to_text()); }

TrainConfig TrainConfig::load(const std::filesystem::path& path) { return from_text(read_text_file(path)); }

double lr_at_epoch(std::size_t epoch, const TrainConfig& config) {
  if (epoch >= config.epochs) {
    throw Error(ErrorCode::kUsage, "lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                                       std::to_string(config.epochs) + ")");
  }
  const double start = 0.125;
  if (epoch <= config.warmup_epochs) {
    if (config.warmup_epochs == 0) return config.base_lr;
    const double frac = static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
    return config.base_lr * (start + (1.0 - start) * frac);
  }
  return config.base_lr * std::pow(config.decay, static_cast<double>(epoch - config.warmup_epochs));
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,lr,loss,soh_loss,rul_loss,seconds\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.loss) << ',' << format_double(e.soh_loss)
        << ',' << format_double(e.rul_loss) << ',' << format_double(e.seconds) << '\n';
  }
  return out.str();
}

std::string text_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Sample> make_samples(const CellDataset& cell, double rul_scale, std::int64_t first_cycle) {
  if (!(rul_scale > 0.0)) throw Error(ErrorCode::kUsage, "make_samples: rul_scale must be positive");
  const auto labels = derive_labels(cell);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < cell.cycles.size(); ++i) {
    const auto& c = cell.cycles[i];
    if (c.cycle_index < first_cycle) continue;
    Sample s;
    s.cell_id = cell.id();
    s.cycle_index = c.cycle_index;
    s.voltages = c.voltages;
    s.target.soh = labels.soh[i];
    if (labels.rul[i]) s.target.rul_norm = static_cast<double>(*labels.rul[i]) / rul_scale;
    out.push_back(std::move(s));
  }
  return out;
}

TrainResult train_run(const std::vector<CellDataset>& cells, ModelConfig model, const TrainConfig& config,
                      const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  model.validate();
  if (cells.empty()) throw Error(ErrorCode::kUsage, "train_run: no training cells");

  // Data-derived model constants.
  double rul_scale = 0.0;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& cell : cells) {
    cell.validate();
    for (const auto& c : cell.cycles) {
      if (c.voltages.size() != model.seq_len) {
        throw Error(ErrorCode::kData, "train_run: cell " + cell.id() + " cycle " + std::to_string(c.cycle_index) +
                                          " has " + std::to_string(c.voltages.size()) + " samples, expected " +
                                          std::to_string(model.seq_len) + " (run preprocess first)");
      }
      for (double v : c.voltages) {
        sum += v;
        sum_sq += v * v;
        ++count;
      }
    }
    const auto labels = derive_labels(cell);
    if (labels.n_eol) rul_scale = std::max(rul_scale, static_cast<double>(*labels.n_eol));
  }
  model.rul_scale = rul_scale > 0.0 ? rul_scale : 1.0;
  model.input_mean = sum / static_cast<double>(count);
  const double var = sum_sq / static_cast<double>(count) - model.input_mean * model.input_mean;
  model.input_std = var > 1e-12 ? std::sqrt(var) : 1.0;

  std::vector<Sample> samples;
  for (const auto& cell : cells) {
    auto s = make_samples(cell, model.rul_scale);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  if (samples.empty()) throw Error(ErrorCode::kData, "train_run: training cells contain no cycles");

  TrainResult result;
  Rng init_rng(mix_seed(config.seed, kInitStream));
  model_init(result.params, model, init_rng);
  // Heads start out predicting the target means: zero output weights and
  // mean-valued biases.
  {
    for (const char* w : {"head.soh.l2.w", "head.rul.l2.w"})
      for (auto& v : result.params.get(w).mutable_data()) v = 0.0;
    double soh_mean = 0.0, rul_mean = 0.0;
    std::size_t rul_n = 0;
    for (const auto& s : samples) {
      soh_mean += s.target.soh;
      if (s.target.rul_norm) {
        rul_mean += *s.target.rul_norm;
        ++rul_n;
      }
    }
    result.params.get("head.soh.l2.b").mutable_data()[0] = soh_mean / static_cast<double>(samples.size());
    if (rul_n > 0) result.params.get("head.rul.l2.b").mutable_data()[0] = rul_mean / static_cast<double>(rul_n);
  }
  for (std::size_t i = 0; i < result.params.size(); ++i) result.params.at(i).set_requires_grad(true);

  result.model = model;
  result.log.seed = config.seed;
  result.log.config_hash = text_hash(model.to_text() + config.to_text());
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    model.save(*out_dir / "model.cfg");
    config.save(*out_dir / "run.cfg");
  }

  AdamState adam = AdamState::for_params(result.params);
  Rng shuffle_rng(mix_seed(config.seed, kShuffleStream));
  result.best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(epoch, config);
    const auto order = shuffle_rng.permutation(samples.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      std::size_t rul_count = 0;
      for (std::size_t idx : batch) rul_count += samples[idx].target.rul_norm ? 1 : 0;

      result.params.zero_grad();
      BatchStats batch_stats;
      try {
        for (std::size_t idx : batch) {
          const auto& s = samples[idx];
          const auto out = model_forward_graph(Tensor::from({s.voltages.size(), 1}, s.voltages), result.params,
                                               model, model.attention_seed);
          const auto st = backprop_sample(out, s.target, batch.size(), rul_count, model.rul_weight);
          batch_stats.loss += st.loss;
          batch_stats.soh += st.soh;
          batch_stats.rul += st.rul;
        }
        if (!std::isfinite(batch_stats.loss)) throw Error(ErrorCode::kNumeric, "loss is not finite");
        if (config.grad_clip_norm > 0.0) clip_grad_norm(result.params, config.grad_clip_norm);
        adam_step(result.params, adam, lr);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        const std::string dump = "epoch " + std::to_string(epoch) + " batch samples [" + join_indices(batch) +
                                 "] lr " + format_double(lr) + ": " + e.what();
        if (out_dir) write_text_file(*out_dir / "nan_dump.txt", dump + "\n");
        throw Error(ErrorCode::kNumeric, "train_run aborted at " + dump);
      }
      const double weight = static_cast<double>(batch.size()) / static_cast<double>(samples.size());
      rec.loss += batch_stats.loss * weight;
      rec.soh_loss += batch_stats.soh * weight;
      rec.rul_loss += batch_stats.rul * weight;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.epochs.push_back(rec);
    if (rec.loss < result.best_loss) {
      result.best_loss = rec.loss;
      result.best_epoch = epoch;
      result.best_params = result.params.clone();
      if (out_dir) save_checkpoint(*out_dir / "best.cpg", result.best_params);
    }
    if (out_dir) write_text_file(*out_dir / "train_log.csv", result.log.to_csv());
  }
  if (out_dir) save_checkpoint(*out_dir / "final.cpg", result.params);
  return result;
}

Split partition(const std::vector<CellDataset>& cells, const std::vector<std::string>& hold_out,
                std::int64_t observation_cycle) {
  for (const auto& id : hold_out) {
    const bool found = std::any_of(cells.begin(), cells.end(), [&](const CellDataset& c) { return c.id() == id; });
    if (!found) throw Error(ErrorCode::kUsage, "partition: held-out cell '" + id + "' is not in the data set");
  }
  Split split;
  split.observation_cycle = observation_cycle;
  for (const auto& c : cells) {
    const bool held = std::find(hold_out.begin(), hold_out.end(), c.id()) != hold_out.end();
    (held ? split.test : split.train).push_back(c);
  }
  if (split.train.empty()) throw Error(ErrorCode::kUsage, "partition: every cell is held out");
  return split;
}

std::vector<Split> leave_one_out_splits(const std::vector<CellDataset>& cells, std::int64_t observation_cycle) {
  std::vector<Split> out;
  for (const auto& c : cells) out.push_back(partition(cells, {c.id()}, observation_cycle));
  return out;
}

CellPredictions predict_cell(const CellDataset& cell, const ParamStore& params, const ModelConfig& model,
                             std::int64_t observation_cycle) {
  const auto labels = derive_labels(cell);
  CellPredictions out;
  out.cell_id = cell.id();
  out.has_rul = labels.has_rul();
  std::vector<std::vector<double>> sequences;
  for (std::size_t i = 0; i < cell.cycles.size(); ++i) {
    const auto& c = cell.cycles[i];
    if (c.cycle_index < observation_cycle) continue;
    out.cycles.push_back(c.cycle_index);
    out.soh_true.push_back(labels.soh[i]);
    out.capacity_true.push_back(c.capacity);
    out.rul_true.push_back(labels.rul[i] ? std::optional<double>(static_cast<double>(*labels.rul[i])) : std::nullopt);
    sequences.push_back(c.voltages);
  }
  if (sequences.empty()) {
    throw Error(ErrorCode::kData, "cell " + cell.id() + ": no cycles at or after observation cycle " +
                                      std::to_string(observation_cycle));
  }
  for (const auto& p : predict_all(sequences, params, model, model.attention_seed)) {
    out.soh_hat.push_back(p.soh_hat);
    out.capacity_hat.push_back(p.soh_hat * cell.manifest.rated_capacity_ah);
    out.rul_hat.push_back(p.rul_hat);
  }
  return out;
}

}  // namespace cellprog
