#include "cellprog/ielstm.hpp"

#include <algorithm>
#include <cmath>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_state(const CellState& s, std::size_t step) {
  for (std::size_t k = 0; k < s.h.size(); ++k) {
    if (!std::isfinite(s.h[k]) || !std::isfinite(s.c[k]) || !std::isfinite(s.n[k]) || !std::isfinite(s.m[k])) {
      throw Error(ErrorCode::kNumeric, "ielstm: non-finite state at step " + std::to_string(step));
    }
    if (!(s.n[k] > 0.0)) {
      throw Error(ErrorCode::kNumeric, "ielstm: normalizer state not positive at step " + std::to_string(step));
    }
  }
}

}  // namespace

void IeLstmConfig::validate() const {
  if (channels == 0 || hidden == 0) throw Error(ErrorCode::kConfig, "ielstm: channels and hidden must be positive");
}

CellState CellState::zeros(std::size_t hidden) {
  CellState s;
  s.h.assign(hidden, 0.0);
  s.c.assign(hidden, 0.0);
  s.n.assign(hidden, 0.0);
  s.m.assign(hidden, 0.0);
  return s;
}

CellState cell_step_from_preacts(const CellState& prev, const GatePreacts& pre, std::size_t step, GateTrace* trace) {
  const std::size_t hsz = prev.h.size();
  if (prev.c.size() != hsz || prev.n.size() != hsz || prev.m.size() != hsz || pre.i.size() != hsz ||
      pre.f.size() != hsz || pre.z.size() != hsz || pre.o.size() != hsz) {
    throw Error(ErrorCode::kDimension, "ielstm: state and pre-activation sizes disagree");
  }
  CellState next = CellState::zeros(hsz);
  if (trace) {
    trace->i.resize(hsz);
    trace->f.resize(hsz);
    trace->z.resize(hsz);
    trace->o.resize(hsz);
    trace->m_from_forget.resize(hsz);
  }
  for (std::size_t k = 0; k < hsz; ++k) {
    const double forget_path = pre.f[k] + prev.m[k];
    const bool from_forget = forget_path >= pre.i[k];
    const double m = from_forget ? forget_path : pre.i[k];
    const double i = std::exp(pre.i[k] - m);
    const double f = std::exp(forget_path - m);
    const double z = std::tanh(pre.z[k]);
    const double o = sigmoid_value(pre.o[k]);
    next.m[k] = m;
    next.n[k] = f * prev.n[k] + i;
    next.c[k] = f * prev.c[k] + i * z;
    next.h[k] = o * next.c[k] / std::max(next.n[k], kHiddenDivGuard);
    if (trace) {
      trace->i[k] = i;
      trace->f[k] = f;
      trace->z[k] = z;
      trace->o[k] = o;
      trace->m_from_forget[k] = from_forget;
    }
  }
  check_state(next, step);
  return next;
}

CellState cell_step(const std::vector<double>& x_t, const std::vector<double>& x_tilde_t, const CellState& prev,
                    const ParamStore& params, const IeLstmConfig& config, std::size_t step) {
  const std::size_t fsz = config.channels, hsz = config.hidden;
  if (x_t.size() != fsz || x_tilde_t.size() != fsz || prev.h.size() != hsz) {
    throw Error(ErrorCode::kDimension, "ielstm: cell_step input sizes do not match the config");
  }
  const auto wif = params.get("ielstm.gates.wx_if").data();
  const auto bif = params.get("ielstm.gates.b_if").data();
  const auto wzo = params.get("ielstm.gates.wx_zo").data();
  const auto bzo = params.get("ielstm.gates.b_zo").data();
  const auto r = params.get("ielstm.gates.r").data();

  std::vector<double> a(4 * hsz);
  for (std::size_t j = 0; j < 2 * hsz; ++j) {
    double s_if = bif[j], s_zo = bzo[j];
    for (std::size_t p = 0; p < fsz; ++p) {
      s_if += x_tilde_t[p] * wif[p * 2 * hsz + j];
      s_zo += x_t[p] * wzo[p * 2 * hsz + j];
    }
    a[j] = s_if;
    a[2 * hsz + j] = s_zo;
  }
  for (std::size_t p = 0; p < hsz; ++p) {
    const double hp = prev.h[p];
    for (std::size_t j = 0; j < 4 * hsz; ++j) a[j] += hp * r[p * 4 * hsz + j];
  }
  GatePreacts pre;
  pre.i.assign(a.begin(), a.begin() + hsz);
  pre.f.assign(a.begin() + hsz, a.begin() + 2 * hsz);
  pre.z.assign(a.begin() + 2 * hsz, a.begin() + 3 * hsz);
  pre.o.assign(a.begin() + 3 * hsz, a.end());
  return cell_step_from_preacts(prev, pre, step);
}

void ielstm_init(ParamStore& params, const IeLstmConfig& config, Rng& rng) {
  config.validate();
  const std::size_t fsz = config.channels, hsz = config.hidden;
  params.add("ielstm.norm.gain", Tensor::full({fsz}, 1.0));
  params.add("ielstm.norm.offset", Tensor::zeros({fsz}));
  params.add("ielstm.conv.w", init::kaiming_uniform({3, fsz, fsz}, 3 * fsz, rng));
  params.add("ielstm.conv.b", Tensor::zeros({fsz}));

  params.add("ielstm.gates.wx_if", init::kaiming_uniform({fsz, 2 * hsz}, fsz, rng));
  auto b_if = Tensor::zeros({2 * hsz});
  for (std::size_t j = hsz; j < 2 * hsz; ++j) b_if.mutable_data()[j] = 1.0;
  params.add("ielstm.gates.b_if", b_if);
  params.add("ielstm.gates.wx_zo", init::kaiming_uniform({fsz, 2 * hsz}, fsz, rng));
  params.add("ielstm.gates.b_zo", Tensor::zeros({2 * hsz}));

  // One orthogonal H x H block per gate, laid side by side.
  auto r = Tensor::zeros({hsz, 4 * hsz});
  for (std::size_t g = 0; g < 4; ++g) {
    const auto block = init::orthogonal(hsz, hsz, rng);
    for (std::size_t p = 0; p < hsz; ++p)
      for (std::size_t j = 0; j < hsz; ++j) r.mutable_data()[p * 4 * hsz + g * hsz + j] = block.at(p, j);
  }
  params.add("ielstm.gates.r", r);

  params.add("ielstm.proj.ln2.w", init::kaiming_uniform({hsz, hsz}, hsz, rng));
  params.add("ielstm.proj.ln2.b", Tensor::zeros({hsz}));
  params.add("ielstm.proj.ln3.w", init::kaiming_uniform({hsz, hsz}, hsz, rng));
  params.add("ielstm.proj.ln3.b", Tensor::zeros({hsz}));
  params.add("ielstm.proj.ln1.w", init::kaiming_uniform({hsz, fsz}, hsz, rng));
  params.add("ielstm.proj.ln1.b", Tensor::zeros({fsz}));
}

Tensor pregate(const Tensor& x, const ParamStore& params, const IeLstmConfig& config) {
  if (x.rank() != 2 || x.dim(1) != config.channels) {
    throw Error(ErrorCode::kDimension, "ielstm: expected L x " + std::to_string(config.channels) + " input, got " +
                                           shape_str(x.shape()));
  }
  const auto normed = layer_norm(x, params.get("ielstm.norm.gain"), params.get("ielstm.norm.offset"));
  return conv1d(normed, params.get("ielstm.conv.w"), params.get("ielstm.conv.b"));
}

Tensor lstm_recurrence(const Tensor& pre_if, const Tensor& pre_zo, const Tensor& recurrent) {
  if (recurrent.rank() != 2 || recurrent.dim(1) != 4 * recurrent.dim(0)) {
    throw Error(ErrorCode::kDimension, "ielstm: recurrent matrix must be H x 4H, got " + shape_str(recurrent.shape()));
  }
  const std::size_t hsz = recurrent.dim(0);
  if (pre_if.rank() != 2 || pre_zo.rank() != 2 || pre_if.dim(1) != 2 * hsz || pre_zo.dim(1) != 2 * hsz ||
      pre_if.dim(0) != pre_zo.dim(0)) {
    throw Error(ErrorCode::kDimension, "ielstm: gate pre-activations " + shape_str(pre_if.shape()) + " and " +
                                           shape_str(pre_zo.shape()) + " do not match H=" + std::to_string(hsz));
  }
  const std::size_t len = pre_if.dim(0);
  const std::size_t g4 = 4 * hsz;
  const auto pif = pre_if.data();
  const auto pzo = pre_zo.data();
  const auto r = recurrent.data();

  // states[t] is the state after step t; states[0] is the zero initial state.
  auto states = std::make_shared<std::vector<CellState>>();
  auto traces = std::make_shared<std::vector<GateTrace>>(len);
  states->reserve(len + 1);
  states->push_back(CellState::zeros(hsz));
  std::vector<double> out(len * hsz);
  std::vector<double> a(g4);
  GatePreacts pre;
  for (std::size_t t = 0; t < len; ++t) {
    const auto& prev = states->back();
    for (std::size_t j = 0; j < 2 * hsz; ++j) {
      a[j] = pif[t * 2 * hsz + j];
      a[2 * hsz + j] = pzo[t * 2 * hsz + j];
    }
    for (std::size_t p = 0; p < hsz; ++p) {
      const double hp = prev.h[p];
      if (hp == 0.0) continue;
      const double* rp = r.data() + p * g4;
      for (std::size_t j = 0; j < g4; ++j) a[j] += hp * rp[j];
    }
    pre.i.assign(a.begin(), a.begin() + hsz);
    pre.f.assign(a.begin() + hsz, a.begin() + 2 * hsz);
    pre.z.assign(a.begin() + 2 * hsz, a.begin() + 3 * hsz);
    pre.o.assign(a.begin() + 3 * hsz, a.end());
    states->push_back(cell_step_from_preacts(prev, pre, t + 1, &(*traces)[t]));
    std::copy(states->back().h.begin(), states->back().h.end(), out.begin() + static_cast<std::ptrdiff_t>(t * hsz));
  }

  NodePtr ifn = pre_if.node(), zon = pre_zo.node(), rn = recurrent.node();
  return make_result({len, hsz}, std::move(out), {ifn, zon, rn},
                     [ifn, zon, rn, states, traces, len, hsz, g4](detail::Node& self) {
    const auto& rv = rn->value;
    std::vector<double> dh(hsz, 0.0), dc(hsz, 0.0), dn(hsz, 0.0), dm(hsz, 0.0);
    std::vector<double> da(g4);
    for (std::size_t t = len; t-- > 0;) {
      const auto& cur = (*states)[t + 1];
      const auto& prev = (*states)[t];
      const auto& tr = (*traces)[t];
      for (std::size_t k = 0; k < hsz; ++k) {
        const bool guarded = cur.n[k] < kHiddenDivGuard;
        const double denom = guarded ? kHiddenDivGuard : cur.n[k];
        const double gh = self.grad[t * hsz + k] + dh[k];
        const double gc = dc[k] + gh * tr.o[k] / denom;
        const double gn = dn[k] - (guarded ? 0.0 : gh * tr.o[k] * cur.c[k] / (denom * denom));
        const double go = gh * cur.c[k] / denom;
        const double gi = gc * tr.z[k] + gn;
        const double gf = gc * prev.c[k] + gn * prev.n[k];
        const double gz = gc * tr.i[k];
        const double gm = dm[k] - gi * tr.i[k] - gf * tr.f[k];
        const double di = gi * tr.i[k] + (tr.m_from_forget[k] ? 0.0 : gm);
        const double df = gf * tr.f[k] + (tr.m_from_forget[k] ? gm : 0.0);
        da[k] = di;
        da[hsz + k] = df;
        da[2 * hsz + k] = gz * (1.0 - tr.z[k] * tr.z[k]);
        da[3 * hsz + k] = go * tr.o[k] * (1.0 - tr.o[k]);
        dc[k] = gc * tr.f[k];
        dn[k] = gn * tr.f[k];
        dm[k] = df;  // d m_{t-1} receives exactly what f~ receives
      }
      if (ifn->requires_grad)
        for (std::size_t j = 0; j < 2 * hsz; ++j) ifn->grad[t * 2 * hsz + j] += da[j];
      if (zon->requires_grad)
        for (std::size_t j = 0; j < 2 * hsz; ++j) zon->grad[t * 2 * hsz + j] += da[2 * hsz + j];
      for (std::size_t p = 0; p < hsz; ++p) {
        const double* rp = rv.data() + p * g4;
        double s = 0.0;
        for (std::size_t j = 0; j < g4; ++j) s += rp[j] * da[j];
        dh[p] = s;
        if (rn->requires_grad && prev.h[p] != 0.0) {
          double* gp = rn->grad.data() + p * g4;
          const double hp = prev.h[p];
          for (std::size_t j = 0; j < g4; ++j) gp[j] += hp * da[j];
        }
      }
    }
  });
}

Tensor ielstm_forward(const Tensor& x, const ParamStore& params, const IeLstmConfig& config) {
  config.validate();
  if (x.rank() != 2 || x.dim(1) != config.channels) {
    throw Error(ErrorCode::kDimension, "ielstm: expected L x " + std::to_string(config.channels) + " input, got " +
                                           shape_str(x.shape()));
  }
  if (x.dim(0) < 3) throw Error(ErrorCode::kDimension, "ielstm: sequence length must be at least 3");
  const auto x_tilde = pregate(x, params, config);
  const auto pre_if = linear(x_tilde, params.get("ielstm.gates.wx_if"), params.get("ielstm.gates.b_if"));
  const auto pre_zo = linear(x, params.get("ielstm.gates.wx_zo"), params.get("ielstm.gates.b_zo"));
  const auto hs = lstm_recurrence(pre_if, pre_zo, params.get("ielstm.gates.r"));
  const auto gate = gelu(linear(hs, params.get("ielstm.proj.ln3.w"), params.get("ielstm.proj.ln3.b")));
  const auto value = linear(hs, params.get("ielstm.proj.ln2.w"), params.get("ielstm.proj.ln2.b"));
  const auto proj = linear(mul(value, gate), params.get("ielstm.proj.ln1.w"), params.get("ielstm.proj.ln1.b"));
  return add(proj, x);
}

}  // namespace cellprog
