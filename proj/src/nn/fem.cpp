#include "cellprog/fem.hpp"

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

struct ConvSpec {
  const char* name;
  std::size_t kernel;
  bool from_input;  // first conv of a branch reads the 1-channel input
};

struct BranchSpec {
  int index;
  bool pool_first;
  std::vector<ConvSpec> convs;
};

const std::vector<BranchSpec>& branches() {
  static const std::vector<BranchSpec> specs = {
      {1, false, {{"conva", 1, true}}},
      {2, false, {{"conva", 1, true}, {"convb", 3, false}}},
      {3, false, {{"conva", 1, true}, {"convb", 5, false}}},
      {4, true, {{"conva", 1, true}}},
  };
  return specs;
}

std::string conv_prefix(const BranchSpec& b, const ConvSpec& c) {
  return "fem.br" + std::to_string(b.index) + "." + c.name;
}

}  // namespace

void FemConfig::validate() const {
  if (channels == 0 || channels % 4 != 0) {
    throw Error(ErrorCode::kConfig, "fem: channels must be a positive multiple of 4, got " + std::to_string(channels));
  }
}

void fem_init(ParamStore& params, const FemConfig& config, Rng& rng) {
  config.validate();
  const std::size_t per = config.channels / 4;
  for (const auto& b : branches()) {
    for (const auto& c : b.convs) {
      const std::size_t cin = c.from_input ? 1 : per;
      const auto prefix = conv_prefix(b, c);
      params.add(prefix + ".w", init::kaiming_uniform({c.kernel, cin, per}, c.kernel * cin, rng));
      params.add(prefix + ".b", Tensor::zeros({per}));
    }
  }
}

Tensor fem_forward(const Tensor& x, const ParamStore& params, const FemConfig& config) {
  config.validate();
  if (x.rank() != 2 || x.dim(1) != 1) {
    throw Error(ErrorCode::kDimension, "fem: expected L x 1 input, got " + shape_str(x.shape()));
  }
  if (x.dim(0) < 5) throw Error(ErrorCode::kDimension, "fem: sequence length must be at least 5");

  std::vector<Tensor> outs;
  for (const auto& b : branches()) {
    Tensor h = b.pool_first ? maxpool1d(x, 3) : x;
    for (const auto& c : b.convs) {
      const auto prefix = conv_prefix(b, c);
      h = gelu(conv1d(h, params.get(prefix + ".w"), params.get(prefix + ".b")));
    }
    outs.push_back(h);
  }
  return concat(outs, 1);
}

}  // namespace cellprog
