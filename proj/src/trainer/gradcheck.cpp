#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>

#include "seqvessel/trainer.hpp"

namespace seqvessel {

namespace {

constexpr double kRelativeStep = 1e-3;
// Entries smaller than this use a step sized as if they had this magnitude.
constexpr double kStepFloor = 0.1;
constexpr std::size_t kMaxEntriesPerTensor = 24;
constexpr int kMaxRefinements = 6;
constexpr double kRoundoffFactor = 100.0;  // the loss sums many cancelling terms
constexpr double kGradientFloor = 1e-6;

// One differentiable input: its live storage and the analytic gradient.
struct Slot {
  std::string name;
  std::span<double> value;
  TensorD grad;
};

struct Problem {
  std::function<double()> loss;
  std::vector<Slot> slots;
  // Limits the total number of probed entries (0 = every slot up to the
  // per-tensor cap).
  std::size_t sample_entries = 0;
  std::shared_ptr<void> owner;
};

TensorD random_tensor(const TensorShape& shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

TensorD random_normal(const TensorShape& shape, CounterRng& rng) {
  TensorD t(shape);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t pick(CounterRng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Pure op with named inputs; the scalar loss is a fixed random projection of
// the output.
struct OpState {
  std::vector<std::pair<std::string, TensorD>> inputs;
  TensorD projection;
};

using OpForward = std::function<TensorD(const std::vector<TensorD>&)>;
using OpBackward = std::function<std::vector<TensorD>(const std::vector<TensorD>&, const TensorD&)>;

Problem op_problem(std::vector<std::pair<std::string, TensorD>> inputs, OpForward fwd, OpBackward bwd, CounterRng& rng) {
  auto st = std::make_shared<OpState>();
  st->inputs = std::move(inputs);
  auto values = [st] {
    std::vector<TensorD> v;
    for (auto& [_, t] : st->inputs) v.push_back(t);
    return v;
  };
  st->projection = random_normal(fwd(values()).shape(), rng);
  const auto grads = bwd(values(), st->projection);
  Problem p;
  p.owner = st;
  p.loss = [st, values, fwd] { return dot(fwd(values()), st->projection); };
  for (std::size_t i = 0; i < st->inputs.size(); ++i) {
    p.slots.push_back({st->inputs[i].first, st->inputs[i].second.data(), grads[i]});
  }
  return p;
}

// Layer owning parameters in a store; input gradient plus every parameter
// gradient are checked.
template <typename Layer>
struct LayerState {
  ParameterStore<double> store;
  std::unique_ptr<Layer> layer;
  std::vector<TensorD> inputs;
  TensorD projection;
};

template <typename Layer, typename Fwd, typename Bwd>
Problem layer_problem(std::shared_ptr<LayerState<Layer>> st, Fwd fwd, Bwd bwd, CounterRng& rng) {
  st->projection = random_normal(fwd(*st).shape(), rng);
  st->store.zero_grad();
  fwd(*st);
  const std::vector<TensorD> input_grads = bwd(*st, st->projection);
  Problem p;
  p.owner = st;
  p.loss = [st, fwd] { return dot(fwd(*st), st->projection); };
  for (std::size_t i = 0; i < st->inputs.size(); ++i) {
    p.slots.push_back({"input" + std::to_string(i), st->inputs[i].data(), input_grads[i]});
  }
  for (auto& [name, param] : st->store.params()) p.slots.push_back({name, param.value.data(), param.grad});
  return p;
}

ConvSpec random_spec(CounterRng& rng, std::size_t k_t, std::size_t k_h, std::size_t k_w, std::size_t t,
                     std::size_t h, std::size_t w) {
  ConvSpec spec;
  const std::size_t k[3] = {k_t, k_h, k_w}, in[3] = {t, h, w};
  for (int a = 0; a < 3; ++a) {
    spec.stride[a] = pick(rng, 1, 2);
    spec.pad[a] = k[a] > 1 ? pick(rng, 0, 1) : 0;
    while (in[a] + 2 * spec.pad[a] < k[a]) ++spec.pad[a];
  }
  return spec;
}

Problem make_conv(CounterRng& rng, bool three) {
  const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
  const std::size_t t = three ? pick(rng, 1, 4) : 1, h = pick(rng, 2, 6), w = pick(rng, 2, 6);
  const std::size_t kt = three ? pick(rng, 1, 3) : 1, kh = pick(rng, 1, 3), kw = pick(rng, 1, 3);
  const ConvSpec spec = random_spec(rng, kt, kh, kw, t, h, w);
  TensorShape xs = three ? TensorShape{n, ci, t, h, w} : TensorShape{n, ci, h, w};
  TensorShape ws = three ? TensorShape{co, ci, kt, kh, kw} : TensorShape{co, ci, kh, kw};
  auto fwd = [spec, three](const std::vector<TensorD>& v) {
    return three ? conv3d(v[0], v[1], v[2], spec) : conv2d(v[0], v[1], v[2], spec);
  };
  auto bwd = [spec, three](const std::vector<TensorD>& v, const TensorD& dy) {
    const auto g = three ? conv3d_backward(v[0], v[1], dy, spec) : conv2d_backward(v[0], v[1], dy, spec);
    return std::vector<TensorD>{g.input, g.weight, g.bias};
  };
  return op_problem({{"input", random_tensor(xs, rng)}, {"weight", random_tensor(ws, rng)},
                     {"bias", random_tensor(TensorShape{co}, rng)}},
                    fwd, bwd, rng);
}

Problem make_batch_norm(CounterRng& rng) {
  const bool five = rng.bernoulli(0.5);
  const Mode mode = rng.bernoulli(0.75) ? Mode::train : Mode::infer;
  const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3), h = pick(rng, 2, 4), w = pick(rng, 2, 4);
  TensorShape xs = five ? TensorShape{n, c, pick(rng, 1, 3), h, w} : TensorShape{n, c, h, w};
  const TensorD rmean = random_tensor(TensorShape{c}, rng, -0.5, 0.5);
  const TensorD rvar = random_tensor(TensorShape{c}, rng, 0.5, 1.5);
  auto run = [mode, rmean, rvar](const std::vector<TensorD>& v, BatchNormCache<double>* cache) {
    TensorD m = rmean, s = rvar;
    return batch_norm(v[0], v[1], v[2], m, s, mode, BatchNormOptions{}, cache);
  };
  auto fwd = [run](const std::vector<TensorD>& v) { return run(v, nullptr); };
  auto bwd = [run](const std::vector<TensorD>& v, const TensorD& dy) {
    BatchNormCache<double> cache;
    run(v, &cache);
    const auto g = batch_norm_backward(cache, v[1], dy);
    return std::vector<TensorD>{g.input, g.gamma, g.beta};
  };
  return op_problem({{"input", random_tensor(xs, rng, -2.0, 2.0)},
                     {"gamma", random_tensor(TensorShape{c}, rng, 0.5, 1.5)},
                     {"beta", random_tensor(TensorShape{c}, rng)}},
                    fwd, bwd, rng);
}

Problem make_activation(CounterRng& rng, Activation kind) {
  const TensorShape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)};
  TensorD x = random_tensor(xs, rng, -3.0, 3.0);
  if (kind == Activation::relu) {
    // Keep inputs clear of the kink at 0 so the stencil stays on one side.
    for (auto& v : x.data()) {
      if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    }
  }
  auto fwd = [kind](const std::vector<TensorD>& v) { return activation(kind, v[0]); };
  auto bwd = [kind](const std::vector<TensorD>& v, const TensorD& dy) {
    return std::vector<TensorD>{activation_backward(kind, activation(kind, v[0]), dy)};
  };
  return op_problem({{"input", x}}, fwd, bwd, rng);
}

Problem make_gap(CounterRng& rng) {
  const TensorShape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)};
  auto fwd = [](const std::vector<TensorD>& v) { return global_avg_pool(v[0]); };
  auto bwd = [](const std::vector<TensorD>& v, const TensorD& dy) {
    return std::vector<TensorD>{global_avg_pool_backward(v[0].shape(), dy)};
  };
  return op_problem({{"input", random_tensor(xs, rng)}}, fwd, bwd, rng);
}

Problem make_upsample(CounterRng& rng) {
  const TensorShape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)};
  auto fwd = [](const std::vector<TensorD>& v) { return bilinear_upsample2x(v[0]); };
  auto bwd = [](const std::vector<TensorD>& v, const TensorD& dy) {
    return std::vector<TensorD>{bilinear_upsample2x_backward(v[0].shape(), dy)};
  };
  return op_problem({{"input", random_tensor(xs, rng)}}, fwd, bwd, rng);
}

// Generic BN affine and bias values; at their zero/one defaults a channel
// whose input is constant (e.g. fully dropped) sits exactly on a ReLU kink.
void randomize_affine(ParameterStore<double>& store, CounterRng& rng) {
  for (auto& [name, p] : store.params()) {
    if (name.ends_with(".gamma")) p.value = random_tensor(p.value.shape(), rng, 0.5, 1.5);
    if (name.ends_with(".beta") || name.ends_with(".bias")) p.value = random_tensor(p.value.shape(), rng, -0.5, 0.5);
  }
}

Problem make_residual(CounterRng& rng, Dims dims) {
  using St = LayerState<ResidualBlock<double>>;
  auto st = std::make_shared<St>();
  const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 2, 5), w = pick(rng, 2, 5);
  st->layer = std::make_unique<ResidualBlock<double>>(st->store, "block", ci, co, dims, rng.split("init"));
  const TensorShape xs = dims == Dims::three ? TensorShape{n, ci, pick(rng, 1, 3), h, w} : TensorShape{n, ci, h, w};
  st->inputs.push_back(random_tensor(xs, rng));
  randomize_affine(st->store, rng);
  auto fwd = [](St& s) { return s.layer->forward(s.inputs[0], Mode::train); };
  auto bwd = [](St& s, const TensorD& dy) { return std::vector<TensorD>{s.layer->backward(dy)}; };
  return layer_problem(st, fwd, bwd, rng);
}

Problem make_ffo(CounterRng& rng) {
  using St = LayerState<FeatureFusion<double>>;
  auto st = std::make_shared<St>();
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), t = pick(rng, 1, 4);
  const bool depthwise = rng.bernoulli(0.5);
  st->layer = std::make_unique<FeatureFusion<double>>(st->store, "ffo", c, t, depthwise, rng.split("init"));
  st->inputs.push_back(random_tensor(TensorShape{n, c, t, pick(rng, 1, 6), pick(rng, 1, 6)}, rng));
  st->store.at("ffo.bias").value = random_tensor(st->store.at("ffo.bias").value.shape(), rng);
  auto fwd = [](St& s) { return s.layer->forward(s.inputs[0]); };
  auto bwd = [](St& s, const TensorD& dy) { return std::vector<TensorD>{s.layer->backward(dy)}; };
  return layer_problem(st, fwd, bwd, rng);
}

Problem make_cab(CounterRng& rng) {
  using St = LayerState<ChannelAttention<double>>;
  auto st = std::make_shared<St>();
  const std::size_t c = pick(rng, 1, 3);
  const TensorShape xs{pick(rng, 1, 2), c, pick(rng, 1, 6), pick(rng, 1, 6)};
  st->layer = std::make_unique<ChannelAttention<double>>(st->store, "cab", c, rng.split("init"));
  st->inputs.push_back(random_tensor(xs, rng));
  st->inputs.push_back(random_tensor(xs, rng));
  randomize_affine(st->store, rng);
  auto fwd = [](St& s) { return s.layer->forward(s.inputs[0], s.inputs[1]); };
  auto bwd = [](St& s, const TensorD& dy) {
    auto [dl, dh] = s.layer->backward(dy);
    return std::vector<TensorD>{dl, dh};
  };
  return layer_problem(st, fwd, bwd, rng);
}

Problem make_loss(CounterRng& rng, LossKind kind) {
  const TensorShape s{pick(rng, 1, 6), pick(rng, 1, 6)};
  TensorD p = random_tensor(s, rng, 0.1, 0.9);
  TensorD y(s);
  for (auto& v : y.data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  auto st = std::make_shared<OpState>();
  st->inputs = {{"p", p}, {"y", y}};
  auto eval = [kind](const TensorD& pp, const TensorD& yy) {
    return kind == LossKind::dice ? dice_loss(pp, yy) : ce_loss(pp, yy);
  };
  Problem prob;
  prob.owner = st;
  prob.loss = [st, eval] { return eval(st->inputs[0].second, st->inputs[1].second).value; };
  prob.slots.push_back({"p", st->inputs[0].second.data(), eval(p, y).grad});
  return prob;
}

struct EndToEndState {
  std::unique_ptr<SvsNet<double>> net;
  TensorD batch, target;
  CounterRng dropout;
};

Problem make_end_to_end(CounterRng& rng) {
  NetworkConfig cfg;
  cfg.stages = 2;
  cfg.base_channels = 2;
  cfg.height = cfg.width = 16;
  auto st = std::make_shared<EndToEndState>();
  st->net = std::make_unique<SvsNet<double>>(cfg, rng.next_u64());
  st->batch = random_tensor(TensorShape{2, cfg.window, 16, 16}, rng, 0.0, 1.0);
  st->target = TensorD(TensorShape{2, 1, 16, 16});
  for (auto& v : st->target.data()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  st->dropout = rng.split("dropout");
  randomize_affine(st->net->store(), rng);
  auto loss = [](EndToEndState& s, bool backward) {
    CounterRng drop = s.dropout;
    const TensorD p = s.net->forward(s.batch, Mode::train, &drop);
    const auto l = batch_loss(LossKind::dice, p, s.target);
    if (backward) s.net->backward(l.grad);
    return l.value;
  };
  st->net->store().zero_grad();
  loss(*st, true);
  Problem prob;
  prob.owner = st;
  prob.sample_entries = 25;
  prob.loss = [st, loss] { return loss(*st, false); };
  for (auto& [name, p] : st->net->store().params()) prob.slots.push_back({name, p.value.data(), p.grad});
  return prob;
}

using Builder = std::function<Problem(CounterRng&)>;

const std::map<std::string, Builder>& registry() {
  static const std::map<std::string, Builder> r = {
      {"conv2d", [](CounterRng& g) { return make_conv(g, false); }},
      {"conv3d", [](CounterRng& g) { return make_conv(g, true); }},
      {"batch_norm", make_batch_norm},
      {"relu", [](CounterRng& g) { return make_activation(g, Activation::relu); }},
      {"sigmoid", [](CounterRng& g) { return make_activation(g, Activation::sigmoid); }},
      {"global_avg_pool", make_gap},
      {"bilinear_upsample2x", make_upsample},
      {"residual_block_2d", [](CounterRng& g) { return make_residual(g, Dims::two); }},
      {"residual_block_3d", [](CounterRng& g) { return make_residual(g, Dims::three); }},
      {"ffo", make_ffo},
      {"cab", make_cab},
      {"dice_loss", [](CounterRng& g) { return make_loss(g, LossKind::dice); }},
      {"ce_loss", [](CounterRng& g) { return make_loss(g, LossKind::ce); }},
      {"end_to_end", make_end_to_end},
  };
  return r;
}

// The floor keeps exactly-zero gradients (e.g. a conv bias feeding batch
// norm) from turning roundoff into a large relative error; it scales with
// the loss because the roundoff of a difference quotient does.
double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

double central_difference(Problem& p, double& x, double h) {
  const double x0 = x;
  x = x0 + h;
  const double up = p.loss();
  x = x0 - h;
  const double down = p.loss();
  x = x0;
  return (up - down) / (2.0 * h);
}

// Central differences at h, h/10, h/100, ...; the estimate taken is the
// coarser member of the first consecutive pair that agrees to within the
// tolerance plus the roundoff of the finer quotient. Shrinking absorbs
// truncation error on sharply curved losses and steps off ReLU kinks inside
// the wider stencils; stopping at the first agreement keeps roundoff out.
double stable_difference(Problem& p, double& x, double h, double loss_scale, double floor) {
  std::vector<double> est, step;
  for (int k = 0; k <= kMaxRefinements; ++k, h /= 10.0) {
    est.push_back(central_difference(p, x, h));
    step.push_back(h);
  }
  std::size_t best = 0;
  double best_excess = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < est.size(); ++k) {
    const double roundoff = kRoundoffFactor * std::numeric_limits<double>::epsilon() * loss_scale / step[k + 1];
    const double allowed = kGradcheckTolerance / 10.0 * std::max({std::abs(est[k]), std::abs(est[k + 1]), floor}) + roundoff;
    const double excess = std::abs(est[k] - est[k + 1]) / allowed;
    if (excess <= 1.0) return est[k];
    if (excess < best_excess) {
      best_excess = excess;
      best = k;
    }
  }
  return est[best];
}

}  // namespace

std::vector<std::string> gradcheck_targets() {
  std::vector<std::string> out;
  for (const auto& [name, _] : registry()) out.push_back(name);
  return out;
}

GradcheckReport gradcheck(const std::string& target, std::size_t trials, std::uint64_t seed) {
  const auto& reg = registry();
  const auto it = reg.find(target);
  if (it == reg.end()) throw std::invalid_argument("unknown gradcheck target '" + target + "'");
  GradcheckReport report;
  report.target = target;
  report.trials = trials;
  const CounterRng root = CounterRng(seed).split(target);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    CounterRng rng = root.split(trial);
    Problem prob = it->second(rng);
    const double loss_scale = std::max(1.0, std::abs(prob.loss()));
    const double floor = kGradientFloor * loss_scale;

    std::vector<std::pair<std::size_t, std::size_t>> probes;  // (slot, entry)
    if (prob.sample_entries > 0) {
      std::size_t total = 0;
      for (const auto& s : prob.slots) total += s.value.size();
      for (std::size_t k = 0; k < prob.sample_entries; ++k) {
        std::size_t flat = rng.below(total), slot = 0;
        while (flat >= prob.slots[slot].value.size()) flat -= prob.slots[slot++].value.size();
        probes.emplace_back(slot, flat);
      }
    } else {
      for (std::size_t s = 0; s < prob.slots.size(); ++s) {
        const std::size_t n = prob.slots[s].value.size();
        if (n <= kMaxEntriesPerTensor) {
          for (std::size_t i = 0; i < n; ++i) probes.emplace_back(s, i);
        } else {
          for (std::size_t k = 0; k < kMaxEntriesPerTensor; ++k) probes.emplace_back(s, rng.below(n));
        }
      }
    }

    for (const auto& [s, i] : probes) {
      Slot& slot = prob.slots[s];
      double& x = slot.value[i];
      const double h = kRelativeStep * std::max(kStepFloor, std::abs(x));
      const double numeric = stable_difference(prob, x, h, loss_scale, floor);
      const double err = relative_error(slot.grad[i], numeric, floor);
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.checked;
    }
  }
  report.pass = report.max_rel_error < kGradcheckTolerance;
  return report;
}

}  // namespace seqvessel
