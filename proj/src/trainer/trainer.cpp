#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "seqvessel/trainer.hpp"

namespace seqvessel {

namespace {

// Runs f(i) for i in [0, n) across up to `workers` threads. Each index is
// handled exactly once and results go to per-index slots, so the outcome is
// independent of the worker count.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Tensor stack_masks(const std::vector<const Sample*>& samples) {
  const TensorShape& s = samples.front()->target_mask.shape();
  const std::size_t plane = samples.front()->target_mask.numel();
  Tensor out(TensorShape{samples.size(), 1, s[0], s[1]});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& m = samples[i]->target_mask;
    if (m.shape() != s) throw ShapeError("masks in a batch differ in shape");
    std::copy(m.data().begin(), m.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * plane));
  }
  return out;
}

void require_masks(const std::vector<Sample>& samples, const char* what) {
  for (const auto& s : samples) {
    if (!s.target_mask.defined()) throw std::invalid_argument(std::string(what) + ": sample " + sample_label(s) + " has no mask");
  }
}

MetricsRow score(const Tensor& prob, const Sample& sample, LossKind loss, double threshold, double& loss_value) {
  const Tensor& gt = sample.target_mask;
  const Tensor p = prob.reshaped(gt.shape());
  loss_value = loss == LossKind::dice ? dice_loss(p, gt).value : ce_loss(p, gt).value;
  const Tensor pred = binarize(p, threshold);
  MetricsRow row{sample_label(sample), segmentation_metrics(pred, gt)};
  const bool empty_gt = std::none_of(gt.data().begin(), gt.data().end(), [](float v) { return v != 0.0f; });
  row.metrics.gve_percent = empty_gt ? std::numeric_limits<double>::quiet_NaN() : gve(pred, gt);
  return row;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(eval_threshold > 0.0 && eval_threshold < 1.0)) throw ConfigError("eval_threshold must lie in (0, 1)");
}

template <typename S>
void sgd_step(ParameterStore<S>& store, double lr, double momentum) {
  bool any = false;
  for (const auto& [_, p] : store.params()) any = any || p.grad.defined();
  if (store.params().empty() || !any) throw std::logic_error("sgd_step: no gradients populated");
  for (auto& [name, p] : store.params()) {
    if (!p.grad.defined() || p.grad.shape() != p.value.shape()) {
      throw std::logic_error("sgd_step: gradient of " + name + " missing or misshapen");
    }
    auto v = p.momentum.data();
    auto g = p.grad.data();
    auto th = p.value.data();
    for (std::size_t i = 0; i < th.size(); ++i) {
      v[i] = static_cast<S>(momentum * v[i] + g[i]);
      th[i] = static_cast<S>(th[i] - lr * v[i]);
    }
  }
  store.zero_grad();
}

template void sgd_step(ParameterStore<float>&, double, double);
template void sgd_step(ParameterStore<double>&, double, double);

Dataset load_dataset(const std::filesystem::path& root, const NetworkConfig& net) {
  Dataset ds;
  for (const auto& entry : read_manifest(root / "manifest.txt")) {
    const Sequence seq = preprocess(load_sequence(root / entry.dir), net.height, net.width);
    // Training windows need both neighbours; evaluation covers every frame.
    auto windows = make_windows(seq, entry.split == Split::train ? Purpose::train : Purpose::infer, net.window);
    auto& dst = entry.split == Split::train ? ds.train : entry.split == Split::val ? ds.val : ds.test;
    for (auto& w : windows) dst.push_back(std::move(w));
  }
  return ds;
}

void write_history_csv(std::ostream& out, const History& history) {
  out << "epoch,train_loss,val_loss,val_DR,val_P,val_F\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.train_loss, r.val_loss, r.val.dr,
                  r.val.p, r.val.f);
    out << buf;
  }
}

std::string sample_label(const Sample& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/frame_%04zu", s.center);
  return s.sequence_id + buf;
}

std::vector<Tensor> predict(SvsNet<float>& net, const std::vector<Sample>& samples, std::size_t batch_size) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<const FrameWindow*> windows;
    for (std::size_t i = begin; i < end; ++i) windows.push_back(&samples[i].window);
    const Tensor probs = net.forward(stack_windows(windows), Mode::infer);
    const std::size_t h = probs.dim(2), w = probs.dim(3);
    for (std::size_t i = 0; i < end - begin; ++i) {
      out.push_back(Tensor::from(TensorShape{h, w}, probs.data().subspan(i * h * w, h * w)));
    }
  }
  return out;
}

EvalResult evaluate(SvsNet<float>& net, const std::vector<Sample>& samples, LossKind loss, double threshold,
                    std::size_t batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  require_masks(samples, "evaluate");
  return evaluate_predictions(predict(net, samples, batch_size), samples, loss, threshold);
}

EvalResult evaluate_predictions(const std::vector<Tensor>& probabilities, const std::vector<Sample>& samples,
                                LossKind loss, double threshold) {
  if (probabilities.size() != samples.size()) throw std::invalid_argument("evaluate: prediction/sample count mismatch");
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  require_masks(samples, "evaluate");
  EvalResult res;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (probabilities[i].numel() != samples[i].target_mask.numel()) {
      throw ShapeError("prediction " + probabilities[i].shape().str() + " does not match mask " +
                       samples[i].target_mask.shape().str());
    }
    double l = 0.0;
    res.rows.push_back(score(probabilities[i], samples[i], loss, threshold, l));
    loss_sum += l;
  }
  res.mean_loss = loss_sum / static_cast<double>(samples.size());
  res.summary = summarize(res.rows);
  return res;
}

Trainer::Trainer(SvsNet<float>& net, const Dataset& data, TrainConfig cfg) : net_(net), data_(data), cfg_(cfg) {
  cfg_.validate();
  if (data_.train.empty()) throw std::invalid_argument("training split is empty");
  if (data_.val.empty()) throw std::invalid_argument("validation split is empty");
  require_masks(data_.train, "train");
  require_masks(data_.val, "validation");
  state_.seed = cfg_.seed;
}

std::size_t Trainer::batches_per_epoch() const {
  return (data_.train.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

std::vector<std::size_t> Trainer::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(data_.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng = CounterRng(state_.seed).split("shuffle").split(epoch);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::optional<EpochRecord> Trainer::step() {
  const CounterRng root(state_.seed);
  const auto order = epoch_order(state_.epoch);
  const std::size_t begin = state_.batch_in_epoch * cfg_.batch_size;
  const std::size_t end = std::min(order.size(), begin + cfg_.batch_size);

  std::vector<Sample> batch(end - begin);
  const CounterRng aug_root = root.split("augment").split(state_.epoch);
  parallel_for(batch.size(), cfg_.workers, [&](std::size_t k) {
    const std::size_t idx = order[begin + k];
    if (!cfg_.augment) {
      batch[k] = data_.train[idx];
      return;
    }
    CounterRng rng = aug_root.split(idx);
    batch[k] = augment(data_.train[idx], cfg_.augmentation, rng).sample;
  });

  std::vector<const FrameWindow*> windows;
  std::vector<const Sample*> ptrs;
  for (const auto& s : batch) {
    windows.push_back(&s.window);
    ptrs.push_back(&s);
  }
  const Tensor x = stack_windows(windows);
  const Tensor y = stack_masks(ptrs);
  CounterRng dropout = root.split("dropout").split(state_.global_step);
  const Tensor p = net_.forward(x, Mode::train, &dropout);
  const LossResult<float> loss = batch_loss(cfg_.loss, p, y);
  net_.backward(loss.grad);
  sgd_step(net_.store(), cfg_.lr, cfg_.momentum);

  last_batch_loss_ = loss.value;
  state_.loss_sum += loss.value * static_cast<double>(batch.size());
  state_.loss_count += batch.size();
  ++state_.batch_in_epoch;
  ++state_.global_step;
  if (state_.batch_in_epoch < batches_per_epoch()) return std::nullopt;

  EpochRecord rec;
  rec.epoch = static_cast<std::size_t>(state_.epoch + 1);
  rec.train_loss = state_.loss_sum / static_cast<double>(state_.loss_count);
  const EvalResult val = evaluate(net_, data_.val, cfg_.loss, cfg_.eval_threshold, cfg_.batch_size);
  rec.val_loss = val.mean_loss;
  rec.val = val.summary.mean;
  ++state_.epoch;
  state_.batch_in_epoch = 0;
  state_.loss_sum = 0.0;
  state_.loss_count = 0;
  history_.push_back(rec);
  return rec;
}

EpochRecord Trainer::run_epoch() {
  for (;;) {
    if (auto rec = step()) return *rec;
  }
}

const History& Trainer::train(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (state_.epoch < cfg_.epochs) {
    const EpochRecord rec = run_epoch();
    if (on_epoch) on_epoch(rec);
    if (cfg_.stop_loss && rec.train_loss <= *cfg_.stop_loss) break;
  }
  return history_;
}

}  // namespace seqvessel
