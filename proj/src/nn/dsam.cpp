#include "cellprog/dsam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

void add_conv(ParamStore& params, const std::string& prefix, std::size_t kernel, std::size_t cin, std::size_t cout,
              Rng& rng) {
  params.add(prefix + ".w", init::kaiming_uniform({kernel, cin, cout}, kernel * cin, rng));
  params.add(prefix + ".b", Tensor::zeros({cout}));
}

void add_linear(ParamStore& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  params.add(prefix + ".w", init::kaiming_uniform({in, out}, in, rng));
  params.add(prefix + ".b", Tensor::zeros({out}));
}

void add_norm(ParamStore& params, const std::string& prefix, std::size_t width) {
  params.add(prefix + ".gain", Tensor::full({width}, 1.0));
  params.add(prefix + ".offset", Tensor::zeros({width}));
}

void add_encoder_wrapping(ParamStore& params, const std::string& prefix, std::size_t width, const FfnConfig& ffn,
                          Rng& rng) {
  add_norm(params, prefix + ".norm1", width);
  add_linear(params, prefix + ".ffn.l1", width, ffn.hidden, rng);
  add_linear(params, prefix + ".ffn.l2", ffn.hidden, width, rng);
  add_norm(params, prefix + ".norm2", width);
}

Tensor conv(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  return conv1d(x, params.get(prefix + ".w"), params.get(prefix + ".b"));
}

Tensor dense(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  return linear(x, params.get(prefix + ".w"), params.get(prefix + ".b"));
}

Tensor norm(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  return layer_norm(x, params.get(prefix + ".gain"), params.get(prefix + ".offset"));
}

std::size_t log_budget(std::size_t len, double c) {
  if (len == 0) return 0;
  const double raw = std::ceil(c * std::log(static_cast<double>(len)));
  const std::size_t at_least_one = raw < 1.0 ? 1 : static_cast<std::size_t>(raw);
  return std::min(len, at_least_one);
}

void check_input(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 2 || x.dim(1) != channels || x.dim(0) == 0) {
    throw Error(ErrorCode::kDimension, std::string(who) + ": expected L x " + std::to_string(channels) +
                                           " input, got " + shape_str(x.shape()));
  }
}

}  // namespace

void DsamConfig::validate() const {
  if (channels == 0 || channels % 2 != 0) {
    throw Error(ErrorCode::kConfig, "dsam: channels must be positive and even, got " + std::to_string(channels));
  }
  if (sparse.heads == 0 || channels % sparse.heads != 0) {
    throw Error(ErrorCode::kConfig, "dsam: channels " + std::to_string(channels) + " not divisible by " +
                                        std::to_string(sparse.heads) + " heads");
  }
  if (!(sparse.c_u > 0.0) || !(sparse.c_s > 0.0)) throw Error(ErrorCode::kConfig, "dsam: c_u and c_s must be positive");
  if (ffn.hidden == 0) throw Error(ErrorCode::kConfig, "dsam: ffn hidden width must be positive");
}

std::size_t query_budget(std::size_t len, double c_u) { return log_budget(len, c_u); }
std::size_t key_sample_size(std::size_t len, double c_s) { return log_budget(len, c_s); }

void dsam_init(ParamStore& params, const DsamConfig& config, Rng& rng) {
  config.validate();
  const std::size_t f = config.channels, half = f / 2;
  add_conv(params, "dsam.pa.ch.cq", 3, f, 1, rng);
  add_conv(params, "dsam.pa.ch.cv", 3, f, half, rng);
  add_conv(params, "dsam.pa.ch.cz", 3, half, f, rng);
  add_linear(params, "dsam.pa.ch.ln", f, f, rng);
  add_conv(params, "dsam.pa.sp.cq", 3, f, half, rng);
  add_conv(params, "dsam.pa.sp.cv", 3, f, half, rng);
  add_encoder_wrapping(params, "dsam.pa", f, config.ffn, rng);

  const std::size_t d = f / config.sparse.heads;
  for (std::size_t h = 0; h < config.sparse.heads; ++h) {
    const std::string prefix = "dsam.sa.head" + std::to_string(h);
    params.add(prefix + ".wq", init::kaiming_uniform({f, d}, f, rng));
    params.add(prefix + ".wk", init::kaiming_uniform({f, d}, f, rng));
    params.add(prefix + ".wv", init::kaiming_uniform({f, d}, f, rng));
  }
  add_linear(params, "dsam.sa.out", f, f, rng);
  add_encoder_wrapping(params, "dsam.sa", f, config.ffn, rng);
}

Tensor polarized_attention(const Tensor& x, const ParamStore& params, const DsamConfig& config,
                           PolarizedTrace* trace) {
  config.validate();
  check_input(x, config.channels, "polarized_attention");
  const std::size_t half = config.channels / 2;

  // Channel branch: a length-softmaxed query pools the values into one
  // F/2 descriptor, which is lifted back to F channel weights.
  const auto q = conv(x, params, "dsam.pa.ch.cq");                   // L x 1
  const auto v = conv(x, params, "dsam.pa.ch.cv");                   // L x F/2
  const auto pooled = matmul(transpose_last_two(v), softmax(q, 0));  // F/2 x 1
  const auto lifted = conv(reshape(pooled, {1, half}), params, "dsam.pa.ch.cz");
  const auto w_ch = sigmoid(dense(lifted, params, "dsam.pa.ch.ln"));  // 1 x F
  const auto y = mul(x, w_ch);

  // Spatial branch on the channel-reweighted map.
  const auto q_sp = softmax(max_axis(conv(y, params, "dsam.pa.sp.cq"), 0), 1);  // 1 x F/2
  const auto v_sp = conv(y, params, "dsam.pa.sp.cv");                             // L x F/2
  const auto w_sp = sigmoid(matmul(v_sp, transpose_last_two(q_sp)));              // L x 1

  if (trace) {
    trace->channel_weights = w_ch;
    trace->spatial_weights = w_sp;
  }
  return mul(y, w_sp);
}

std::vector<double> sparsity_measure(const Tensor& q, const Tensor& k, const std::vector<std::size_t>& key_rows,
                                     KeyMeanNorm mean_norm) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw Error(ErrorCode::kDimension, "sparsity_measure: q " + shape_str(q.shape()) + " and k " +
                                           shape_str(k.shape()) + " disagree");
  }
  if (key_rows.empty()) throw Error(ErrorCode::kUsage, "sparsity_measure: empty key sample");
  const std::size_t len = q.dim(0), d = q.dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double divisor = mean_norm == KeyMeanNorm::kSequenceLength ? static_cast<double>(k.dim(0))
                                                                   : static_cast<double>(key_rows.size());
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t j : key_rows) {
      if (j >= k.dim(0)) throw Error(ErrorCode::kUsage, "sparsity_measure: key row out of range");
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += q.at(i, p) * k.at(j, p);
      s *= inv_sqrt_d;
      best = std::max(best, s);
      total += s;
    }
    out[i] = best - total / divisor;
  }
  return out;
}

std::vector<std::size_t> select_top_queries(const std::vector<double>& measure, std::size_t budget) {
  std::vector<std::size_t> order(measure.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  budget = std::min(budget, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget), order.end(),
                    [&](std::size_t a, std::size_t b) { return measure[a] > measure[b] || (measure[a] == measure[b] && a < b); });
  order.resize(budget);
  return order;
}

Tensor sparse_attention_head(const Tensor& q, const Tensor& k, const Tensor& v,
                             const std::vector<std::size_t>& selected) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0) ||
      q.dim(0) != k.dim(0)) {
    throw Error(ErrorCode::kDimension, "sparse_attention_head: q/k/v shapes disagree");
  }
  const std::size_t len = q.dim(0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  const auto fill = mean_axis(v, 0);
  if (selected.empty()) return scatter_rows_over_fill(Tensor::zeros({0, v.dim(1)}), {}, fill, len);
  const auto scores = scale(matmul(gather_rows(q, selected), transpose_last_two(k)), inv_sqrt_d);
  const auto picked = matmul(softmax(scores, 1), v);
  return scatter_rows_over_fill(picked, selected, fill, len);
}

std::vector<std::size_t> sample_key_rows(std::size_t len, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  return rng.sample_without_replacement(len, count);
}

Tensor sparse_attention(const Tensor& x, const ParamStore& params, const DsamConfig& config, std::uint64_t seed) {
  config.validate();
  check_input(x, config.channels, "sparse_attention");
  const std::size_t len = x.dim(0);
  const std::size_t budget = query_budget(len, config.sparse.c_u);
  const std::size_t samples = key_sample_size(len, config.sparse.c_s);

  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < config.sparse.heads; ++h) {
    const std::string prefix = "dsam.sa.head" + std::to_string(h);
    const auto q = matmul(x, params.get(prefix + ".wq"));
    const auto k = matmul(x, params.get(prefix + ".wk"));
    const auto v = matmul(x, params.get(prefix + ".wv"));
    const auto keys = sample_key_rows(len, samples, mix_seed(seed, h));
    const auto selected = select_top_queries(sparsity_measure(q, k, keys, config.sparse.mean_norm), budget);
    heads.push_back(sparse_attention_head(q, k, v, selected));
  }
  return dense(concat(heads, 1), params, "dsam.sa.out");
}

Tensor encoder_block(const Tensor& x, const AttentionFn& attention, const ParamStore& params, const std::string& prefix,
                     const FfnConfig& ffn) {
  const auto a = norm(add(attention(x), x), params, prefix + ".norm1");
  const auto hidden = apply_activation(ffn.activation, dense(a, params, prefix + ".ffn.l1"));
  const auto ff = dense(hidden, params, prefix + ".ffn.l2");
  return norm(add(ff, a), params, prefix + ".norm2");
}

DsamStreams dsam_forward(const Tensor& x, const ParamStore& params, const DsamConfig& config, std::uint64_t seed) {
  config.validate();
  check_input(x, config.channels, "dsam");
  DsamStreams out;
  out.soh = encoder_block(
      x, [&](const Tensor& in) { return polarized_attention(in, params, config); }, params, "dsam.pa", config.ffn);
  out.rul = encoder_block(
      x, [&](const Tensor& in) { return sparse_attention(in, params, config, seed); }, params, "dsam.sa", config.ffn);
  return out;
}

}  // namespace cellprog
