#include "cellprog/model.hpp"

#include <cmath>
#include <sstream>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"
#include "cellprog/kvtext.hpp"

namespace cellprog {

namespace {

const std::string kWhat = "model config";

std::string norm_name(KeyMeanNorm n) { return n == KeyMeanNorm::kSequenceLength ? "length" : "sample"; }

KeyMeanNorm parse_norm(const std::string& s) {
  if (s == "length") return KeyMeanNorm::kSequenceLength;
  if (s == "sample") return KeyMeanNorm::kSampleSize;
  throw Error(ErrorCode::kConfig, "model config: key_mean_norm must be length or sample, got '" + s + "'");
}

void add_head(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng) {
  params.add(prefix + ".l1.w", init::kaiming_uniform({in, hidden}, in, rng));
  params.add(prefix + ".l1.b", Tensor::zeros({hidden}));
  params.add(prefix + ".l2.w", init::kaiming_uniform({hidden, 1}, hidden, rng));
  params.add(prefix + ".l2.b", Tensor::zeros({1}));
}

}  // namespace

void ModelConfig::validate() const {
  if (seq_len == 0 || fem_channels == 0 || lstm_hidden == 0 || task_hidden == 0 || ffn_hidden == 0 || heads == 0) {
    throw Error(ErrorCode::kConfig, "model config: all sizes must be positive");
  }
  if (fem_channels % 4 != 0 || fem_channels % heads != 0) {
    throw Error(ErrorCode::kConfig, "model config: fem_channels " + std::to_string(fem_channels) +
                                        " must be divisible by 4 and by heads " + std::to_string(heads));
  }
  if (seq_len < 5) throw Error(ErrorCode::kConfig, "model config: seq_len must be at least 5");
  if (!(rul_scale > 0.0) || !(input_std > 0.0) || !(rul_weight >= 0.0) || !(sparse_c_u > 0.0) || !(sparse_c_s > 0.0)) {
    throw Error(ErrorCode::kConfig, "model config: rul_scale, input_std, c_u, c_s must be positive, rul_weight >= 0");
  }
}

FemConfig ModelConfig::fem() const { return FemConfig{fem_channels}; }

IeLstmConfig ModelConfig::ielstm() const { return IeLstmConfig{fem_channels, lstm_hidden}; }

DsamConfig ModelConfig::dsam() const {
  DsamConfig d;
  d.channels = fem_channels;
  d.sparse.heads = heads;
  d.sparse.c_u = sparse_c_u;
  d.sparse.c_s = sparse_c_s;
  d.sparse.mean_norm = key_mean_norm;
  d.ffn.hidden = ffn_hidden;
  d.ffn.activation = ffn_activation;
  return d;
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "seq_len=" << seq_len << '\n'
      << "fem_channels=" << fem_channels << '\n'
      << "lstm_hidden=" << lstm_hidden << '\n'
      << "task_hidden=" << task_hidden << '\n'
      << "ffn_hidden=" << ffn_hidden << '\n'
      << "heads=" << heads << '\n'
      << "sparse_c_u=" << format_double(sparse_c_u) << '\n'
      << "sparse_c_s=" << format_double(sparse_c_s) << '\n'
      << "key_mean_norm=" << norm_name(key_mean_norm) << '\n'
      << "ffn_activation=" << activation_name(ffn_activation) << '\n'
      << "head_activation=" << activation_name(head_activation) << '\n'
      << "rul_scale=" << format_double(rul_scale) << '\n'
      << "rul_weight=" << format_double(rul_weight) << '\n'
      << "input_mean=" << format_double(input_mean) << '\n'
      << "input_std=" << format_double(input_std) << '\n'
      << "attention_seed=" << attention_seed << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  const auto kv = parse_key_values(text, kWhat);
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "seq_len") c.seq_len = kv_uint(key, value, kWhat);
    else if (key == "fem_channels") c.fem_channels = kv_uint(key, value, kWhat);
    else if (key == "lstm_hidden") c.lstm_hidden = kv_uint(key, value, kWhat);
    else if (key == "task_hidden") c.task_hidden = kv_uint(key, value, kWhat);
    else if (key == "ffn_hidden") c.ffn_hidden = kv_uint(key, value, kWhat);
    else if (key == "heads") c.heads = kv_uint(key, value, kWhat);
    else if (key == "sparse_c_u") c.sparse_c_u = kv_double(key, value, kWhat);
    else if (key == "sparse_c_s") c.sparse_c_s = kv_double(key, value, kWhat);
    else if (key == "key_mean_norm") c.key_mean_norm = parse_norm(value);
    else if (key == "ffn_activation") c.ffn_activation = parse_activation(value);
    else if (key == "head_activation") c.head_activation = parse_activation(value);
    else if (key == "rul_scale") c.rul_scale = kv_double(key, value, kWhat);
    else if (key == "rul_weight") c.rul_weight = kv_double(key, value, kWhat);
    else if (key == "input_mean") c.input_mean = kv_double(key, value, kWhat);
    else if (key == "input_std") c.input_std = kv_double(key, value, kWhat);
    else if (key == "attention_seed") c.attention_seed = kv_uint(key, value, kWhat);
    else throw Error(ErrorCode::kConfig, "model config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void ModelConfig::save(const std::filesystem::path& path) const { write_text_file(path, to_text()); }

ModelConfig ModelConfig::load(const std::filesystem::path& path) { return from_text(read_text_file(path)); }

void model_init(ParamStore& params, const ModelConfig& config, Rng& rng) {
  config.validate();
  fem_init(params, config.fem(), rng);
  ielstm_init(params, config.ielstm(), rng);
  dsam_init(params, config.dsam(), rng);
  add_head(params, "head.soh", config.fem_channels, config.task_hidden, rng);
  add_head(params, "head.rul", config.fem_channels, config.task_hidden, rng);
}

Tensor task_head(const Tensor& x, const ParamStore& params, const std::string& prefix, Activation act) {
  const auto pooled = mean_axis(x, 0);
  const auto hidden = apply_activation(act, linear(pooled, params.get(prefix + ".l1.w"), params.get(prefix + ".l1.b")));
  return linear(hidden, params.get(prefix + ".l2.w"), params.get(prefix + ".l2.b"));
}

ModelOutput model_forward_graph(const Tensor& x, const ParamStore& params, const ModelConfig& config,
                                std::uint64_t seed) {
  config.validate();
  if (x.rank() != 2 || x.dim(0) != config.seq_len || x.dim(1) != 1) {
    throw Error(ErrorCode::kDimension, "model: expected input " + std::to_string(config.seq_len) + " x 1, got " +
                                           shape_str(x.shape()));
  }
  const auto standardized = scale(add_scalar(x, -config.input_mean), 1.0 / config.input_std);
  const auto features = fem_forward(standardized, params, config.fem());
  const auto temporal = ielstm_forward(features, params, config.ielstm());
  const auto streams = dsam_forward(temporal, params, config.dsam(), seed);
  return ModelOutput{task_head(streams.soh, params, "head.soh", config.head_activation),
                     task_head(streams.rul, params, "head.rul", config.head_activation)};
}

Prediction model_forward(const Tensor& x, const ParamStore& params, const ModelConfig& config, std::uint64_t seed) {
  const auto out = model_forward_graph(x, params, config, seed);
  Prediction p;
  p.soh_hat = out.soh.item();
  p.rul_hat_norm = out.rul_norm.item();
  p.rul_hat = p.rul_hat_norm * config.rul_scale;
  return p;
}

std::vector<Prediction> predict_all(const std::vector<std::vector<double>>& sequences, const ParamStore& params,
                                    const ModelConfig& config, std::uint64_t seed) {
  NoGradGuard no_grad;
  std::vector<Prediction> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(model_forward(Tensor::from({s.size(), 1}, s), params, config, seed));
  return out;
}

Tensor joint_loss(const std::vector<ModelOutput>& predictions, const std::vector<Target>& targets, double rul_weight) {
  if (predictions.empty()) throw Error(ErrorCode::kUsage, "joint_loss: empty batch");
  if (predictions.size() != targets.size()) {
    throw Error(ErrorCode::kUsage, "joint_loss: " + std::to_string(predictions.size()) + " predictions but " +
                                       std::to_string(targets.size()) + " targets");
  }
  Tensor soh_sum, rul_sum;
  std::size_t rul_count = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto se = square(add_scalar(predictions[i].soh, -targets[i].soh));
    soh_sum = soh_sum.defined() ? add(soh_sum, se) : se;
    if (targets[i].rul_norm) {
      const auto re = square(add_scalar(predictions[i].rul_norm, -*targets[i].rul_norm));
      rul_sum = rul_sum.defined() ? add(rul_sum, re) : re;
      ++rul_count;
    }
  }
  auto loss = scale(soh_sum, 1.0 / static_cast<double>(predictions.size()));
  if (rul_count > 0) loss = add(loss, scale(rul_sum, rul_weight / static_cast<double>(rul_count)));
  return reshape(loss, {1});
}

LossParts joint_loss_parts(const std::vector<ModelOutput>& predictions, const std::vector<Target>& targets) {
  if (predictions.empty() || predictions.size() != targets.size()) {
    throw Error(ErrorCode::kUsage, "joint_loss_parts: empty or mismatched batch");
  }
  LossParts parts;
  std::size_t rul_count = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double ds = predictions[i].soh.item() - targets[i].soh;
    parts.soh += ds * ds;
    if (targets[i].rul_norm) {
      const double dr = predictions[i].rul_norm.item() - *targets[i].rul_norm;
      parts.rul += dr * dr;
      ++rul_count;
    }
  }
  parts.soh /= static_cast<double>(predictions.size());
  if (rul_count > 0) parts.rul /= static_cast<double>(rul_count);
  return parts;
}

}  // namespace cellprog
