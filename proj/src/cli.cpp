#include "seqvessel/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace seqvessel {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw ConfigError("config key " + key + ": malformed value '" + value + "'");
  }
  return out;
}

bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw ConfigError("config key " + key + ": expected on|off, got '" + value + "'");
}

const char* on_off(bool b) { return b ? "on" : "off"; }

std::string encoder_name(EncoderKind e) { return e == EncoderKind::conv3d ? "3d" : "2d"; }

EncoderKind parse_encoder(const std::string& s) {
  if (s == "3d") return EncoderKind::conv3d;
  if (s == "2d") return EncoderKind::conv2d;
  throw ConfigError("encoder must be 3d or 2d, got '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string indexed(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", prefix, i, ext);
  return buf;
}

std::string summary_text(const MetricsSummary& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "samples=%zu DR=%.4f+-%.4f P=%.4f+-%.4f F=%.4f+-%.4f GVE=%.2f+-%.2f%%\n", s.count,
                s.mean.dr, s.stddev.dr, s.mean.p, s.stddev.p, s.mean.f, s.stddev.f, s.mean.gve_percent,
                s.stddev.gve_percent);
  return buf;
}

// Flags shared by train and ablate. Defaults come from the library configs.
struct RunFlags {
  RunConfig cfg;
  std::size_t hw = cfg.net.height;
  std::string encoder = "3d", attention = "on", ffo_depthwise = "off", loss = "dice", augment = "on";
  std::string stop_loss = "none";

  void add_to(CLI::App* app) {
    NetworkConfig& n = cfg.net;
    TrainConfig& t = cfg.train;
    app->add_option("--stages", n.stages, "Encoder/decoder stages");
    app->add_option("--base", n.base_channels, "Channels at stage 1");
    app->add_option("--window", n.window, "Frames per input window");
    app->add_option("--hw", hw, "Network input height and width");
    app->add_option("--dropout", n.dropout_rate, "Spatial dropout rate on the deepest stages");
    app->add_option("--channel-cap", n.channel_cap, "Upper bound on channels per stage");
    app->add_option("--encoder", encoder, "Encoder kind")->check(CLI::IsMember({"3d", "2d"}));
    app->add_option("--attention", attention, "Channel attention in the decoder")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--ffo-depthwise", ffo_depthwise, "Depthwise temporal fusion")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--encoder2d-blocks", n.encoder2d_blocks, "Residual blocks per stage of the 2d encoder");
    app->add_option("--lr", t.lr, "SGD learning rate");
    app->add_option("--momentum", t.momentum, "SGD momentum");
    app->add_option("--batch-size", t.batch_size, "Windows per batch");
    app->add_option("--epochs", t.epochs, "Maximum epochs");
    app->add_option("--seed", t.seed, "Seed for initialization, shuffling, augmentation and dropout");
    app->add_option("--loss", loss, "Training loss")->check(CLI::IsMember({"dice", "ce"}));
    app->add_option("--augment", augment, "Random geometric augmentation")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--workers", t.workers, "Data-loading threads")->envname("SEQVESSEL_WORKERS");
    app->add_option("--eval-threshold", t.eval_threshold, "Binarization threshold for metrics");
    app->add_option("--stop-loss", stop_loss, "Stop once the epoch train loss is <= this ('none' disables)");
  }

  RunConfig resolve() const {
    RunConfig r = cfg;
    r.net.height = r.net.width = hw;
    r.net.encoder = parse_encoder(encoder);
    r.net.attention = attention == "on";
    r.net.ffo_depthwise = ffo_depthwise == "on";
    r.train.loss = parse_loss_kind(loss);
    r.train.augment = augment == "on";
    r.train.stop_loss.reset();
    if (stop_loss != "none") r.train.stop_loss = parse_number<double>("stop_loss", stop_loss);
    r.net.validate();
    r.train.validate();
    return r;
  }
};

void load_weights(SvsNet<float>& net, const std::filesystem::path& checkpoint) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  restore_store(net.store(), ck.store);
}

void write_masks(const std::filesystem::path& dir, const std::vector<Tensor>& probs, const std::vector<Sample>& samples,
                 double threshold) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto sub = dir / samples[i].sequence_id;
    std::filesystem::create_directories(sub);
    write_pgm(sub / indexed("mask", samples[i].center, ".pgm"), mask_to_image(binarize(probs[i], threshold)));
  }
}

int cmd_synth(const std::filesystem::path& out_dir, std::size_t sequences, const SynthConfig& sc, std::uint64_t seed,
              std::ostream& out) {
  if (sequences == 0) throw ConfigError("--sequences must be >= 1");
  const auto entries = write_synthetic_corpus(out_dir, sequences, sc, seed);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : entries) ++counts[static_cast<int>(e.split)];
  out << "wrote " << entries.size() << " sequences to " << out_dir.string() << " (train " << counts[0] << ", val "
      << counts[1] << ", test " << counts[2] << ")\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out_dir,
              std::size_t checkpoint_every, std::ostream& out) {
  const std::string id = run_id(cfg);
  std::filesystem::create_directories(out_dir / "checkpoints");
  write_text(out_dir / "config.txt", to_config_text(cfg));
  write_text(out_dir / "run_id", id + "\n");
  out << "run " << id << "\n";

  const Dataset ds = load_dataset(data, cfg.net);
  SvsNet<float> net(cfg.net, cfg.train.seed);
  Trainer trainer(net, ds, cfg.train);
  trainer.train([&](const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu train_loss %.6f val_loss %.6f val_F %.4f\n", r.epoch, r.train_loss,
                  r.val_loss, r.val.f);
    out << buf << std::flush;
    if (checkpoint_every > 0 && r.epoch % checkpoint_every == 0) {
      save_checkpoint(net.store(), out_dir / "checkpoints" / indexed("epoch", r.epoch, ".svsn"), trainer.state());
    }
  });
  save_checkpoint(net.store(), out_dir / "checkpoints" / "final.svsn", trainer.state());
  {
    std::ofstream h(out_dir / "history.csv", std::ios::binary);
    write_history_csv(h, trainer.history());
  }
  const auto probs = predict(net, ds.val, cfg.train.batch_size);
  const EvalResult val = evaluate_predictions(probs, ds.val, cfg.train.loss, cfg.train.eval_threshold);
  write_masks(out_dir / "masks", probs, ds.val, cfg.train.eval_threshold);
  {
    std::ofstream m(out_dir / "metrics.csv", std::ios::binary);
    write_metrics_csv(m, val.rows);
  }
  const std::string summary = "run " + id + "\nepochs " + std::to_string(trainer.history().size()) +
                              "\nvalidation " + summary_text(val.summary);
  write_text(out_dir / "summary.txt", summary);
  out << summary;
  return 0;
}

int cmd_eval(const std::filesystem::path& config, const std::filesystem::path& checkpoint,
             const std::filesystem::path& data, const std::string& split, std::optional<double> threshold,
             const std::filesystem::path& out_dir, std::ostream& out) {
  const RunConfig cfg = read_config_file(config);
  SvsNet<float> net(cfg.net, cfg.train.seed);
  load_weights(net, checkpoint);
  const Dataset ds = load_dataset(data, cfg.net);
  const auto& samples = split == "train" ? ds.train : split == "val" ? ds.val : ds.test;
  if (samples.empty()) throw std::runtime_error("split '" + split + "' is empty in " + data.string());
  const double thr = threshold.value_or(cfg.train.eval_threshold);
  const EvalResult res = evaluate(net, samples, cfg.train.loss, thr, cfg.train.batch_size);
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream m(out_dir / "metrics.csv", std::ios::binary);
    write_metrics_csv(m, res.rows);
  }
  const std::string summary = split + " " + summary_text(res.summary);
  write_text(out_dir / "summary.txt", summary);
  out << summary;
  return 0;
}

int cmd_infer(const std::filesystem::path& config, const std::filesystem::path& checkpoint,
              const std::filesystem::path& data, const std::filesystem::path& out_dir, double threshold, bool raw,
              std::ostream& out) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("--threshold must lie in (0, 1)");
  const RunConfig cfg = read_config_file(config);
  SvsNet<float> net(cfg.net, cfg.train.seed);
  load_weights(net, checkpoint);
  const Sequence original = load_sequence(data);
  const std::size_t h0 = original.frames.front().dim(0), w0 = original.frames.front().dim(1);
  const auto samples = make_windows(preprocess(original, cfg.net.height, cfg.net.width), Purpose::infer, cfg.net.window);
  const auto probs = predict(net, samples, cfg.train.batch_size);
  std::filesystem::create_directories(out_dir);
  std::vector<NamedTensor> dump;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Tensor p = resize_bilinear(probs[i], h0, w0);
    write_pgm(out_dir / indexed("prob", i + 1, ".pgm"), tensor_to_image(p));
    write_pgm(out_dir / indexed("mask", i + 1, ".pgm"), mask_to_image(binarize(p, threshold)));
    if (raw) dump.push_back({indexed("prob", i + 1, ""), p});
  }
  if (raw) write_tensors(out_dir / "probabilities.svsn", dump);
  out << "wrote " << probs.size() << " probability maps and masks to " << out_dir.string() << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::filesystem::path& data, std::size_t seeds,
               const std::filesystem::path& out_dir, std::ostream& out) {
  if (seeds == 0) throw ConfigError("--seeds must be >= 1");
  const Dataset ds = load_dataset(data, cfg.net);
  std::vector<std::uint64_t> seed_list;
  for (std::size_t k = 0; k < seeds; ++k) seed_list.push_back(cfg.train.seed + k);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.txt", to_config_text(cfg));

  std::ofstream runs(out_dir / "ablation_runs.csv", std::ios::binary);
  runs << "variant,seed,DR,P,F,GVE\n";
  const auto rows = run_ablation(ds, cfg.net, cfg.train, full_ablation_grid(), seed_list, [&](const AblationRun& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%.6f,%.6f,%.6f\n", r.variant.label().c_str(),
                  static_cast<unsigned long long>(r.seed), r.test.mean.dr, r.test.mean.p, r.test.mean.f,
                  r.test.mean.gve_percent);
    runs << buf << std::flush;
    out << "done " << r.variant.label() << " seed " << r.seed << " F " << fmt_double(r.test.mean.f) << "\n"
        << std::flush;
  });

  std::ostringstream table;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s\n", "variant", "mean_F", "std_F", "median_F");
  table << buf;
  for (const auto& r : rows) {
    double mean = 0.0, var = 0.0;
    for (double f : r.f_per_seed) mean += f;
    mean /= static_cast<double>(r.f_per_seed.size());
    for (double f : r.f_per_seed) var += (f - mean) * (f - mean);
    var /= static_cast<double>(r.f_per_seed.size());
    std::snprintf(buf, sizeof buf, "%-16s %8.4f %8.4f %8.4f\n", r.variant.label().c_str(), mean, std::sqrt(var),
                  r.median_f);
    table << buf;
  }
  write_text(out_dir / "table.txt", table.str());
  out << table.str();
  return 0;
}

int cmd_gradcheck(const std::string& target, std::size_t trials, std::uint64_t seed, std::ostream& out) {
  const auto targets = target == "all" ? gradcheck_targets() : std::vector<std::string>{target};
  bool ok = true;
  for (const auto& t : targets) {
    const GradcheckReport r = gradcheck(t, trials, seed);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-20s %s max_rel_err=%.3e checked=%zu trials=%zu\n", r.target.c_str(),
                  r.pass ? "PASS" : "FAIL", r.max_rel_error, r.checked, r.trials);
    out << buf << std::flush;
    ok = ok && r.pass;
  }
  return ok ? 0 : 2;
}

}  // namespace

std::string to_config_text(const RunConfig& cfg) {
  const NetworkConfig& n = cfg.net;
  const TrainConfig& t = cfg.train;
  if (n.height != n.width) throw ConfigError("config files describe square inputs only");
  std::ostringstream s;
  s << "stages=" << n.stages << "\n"
    << "base=" << n.base_channels << "\n"
    << "window=" << n.window << "\n"
    << "hw=" << n.height << "\n"
    << "dropout=" << fmt_double(n.dropout_rate) << "\n"
    << "channel_cap=" << n.channel_cap << "\n"
    << "encoder=" << encoder_name(n.encoder) << "\n"
    << "attention=" << on_off(n.attention) << "\n"
    << "ffo_depthwise=" << on_off(n.ffo_depthwise) << "\n"
    << "encoder2d_blocks=" << n.encoder2d_blocks << "\n"
    << "lr=" << fmt_double(t.lr) << "\n"
    << "momentum=" << fmt_double(t.momentum) << "\n"
    << "batch_size=" << t.batch_size << "\n"
    << "epochs=" << t.epochs << "\n"
    << "seed=" << t.seed << "\n"
    << "loss=" << to_string(t.loss) << "\n"
    << "augment=" << on_off(t.augment) << "\n"
    << "workers=" << t.workers << "\n"
    << "eval_threshold=" << fmt_double(t.eval_threshold) << "\n"
    << "stop_loss=" << (t.stop_loss ? fmt_double(*t.stop_loss) : std::string("none")) << "\n";
  return s.str();
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  NetworkConfig& n = cfg.net;
  TrainConfig& t = cfg.train;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size = [](std::size_t& f) -> Setter { return [&f](auto& k, auto& v) { f = parse_number<std::size_t>(k, v); }; };
  auto real = [](double& f) -> Setter { return [&f](auto& k, auto& v) { f = parse_number<double>(k, v); }; };
  auto flag = [](bool& f) -> Setter { return [&f](auto& k, auto& v) { f = parse_switch(k, v); }; };
  const std::map<std::string, Setter> setters = {
      {"stages", size(n.stages)},
      {"base", size(n.base_channels)},
      {"window", size(n.window)},
      {"hw", [&n](auto& k, auto& v) { n.height = n.width = parse_number<std::size_t>(k, v); }},
      {"dropout", real(n.dropout_rate)},
      {"channel_cap", size(n.channel_cap)},
      {"encoder", [&n](auto&, auto& v) { n.encoder = parse_encoder(v); }},
      {"attention", flag(n.attention)},
      {"ffo_depthwise", flag(n.ffo_depthwise)},
      {"encoder2d_blocks", size(n.encoder2d_blocks)},
      {"lr", real(t.lr)},
      {"momentum", real(t.momentum)},
      {"batch_size", size(t.batch_size)},
      {"epochs", size(t.epochs)},
      {"seed", [&t](auto& k, auto& v) { t.seed = parse_number<std::uint64_t>(k, v); }},
      {"loss", [&t](auto&, auto& v) { t.loss = parse_loss_kind(v); }},
      {"augment", flag(t.augment)},
      {"workers", size(t.workers)},
      {"eval_threshold", real(t.eval_threshold)},
      {"stop_loss",
       [&t](auto& k, auto& v) {
         t.stop_loss.reset();
         if (v != "none") t.stop_loss = parse_number<double>(k, v);
       }},
  };
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(key, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key " + key + ": " + e.what());
    }
  }
  n.validate();
  t.validate();
  return cfg;
}

RunConfig read_config_file(const std::filesystem::path& path) { return parse_config_text(read_text(path)); }

std::string run_id(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_config_text(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential vessel segmentation: synthetic data, training, evaluation and inference", "seqvessel"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "seqvessel 1.0");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic angiography-like corpus with masks and a manifest");
  std::filesystem::path synth_out;
  std::size_t synth_sequences = 24, synth_hw = 64, synth_vessels = 2;
  std::uint64_t synth_seed = 0;
  SynthConfig sc;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--sequences", synth_sequences, "Number of sequences");
  synth->add_option("--hw", synth_hw, "Frame height and width");
  synth->add_option("--frames", sc.frames, "Frames per sequence");
  synth->add_option("--vessels", synth_vessels, "Vessels per sequence");
  synth->add_option("--photon-scale", sc.photon_scale, "Poisson photon count at full intensity");
  synth->add_option("--seed", synth_seed, "Corpus seed");

  // train
  auto* train = app.add_subcommand("train", "Train a network and write history, checkpoints and validation metrics");
  RunFlags train_flags;
  std::filesystem::path train_data, train_out;
  std::size_t checkpoint_every = 0;
  train->add_option("--data", train_data, "Corpus directory containing manifest.txt")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--checkpoint-every", checkpoint_every, "Also checkpoint every N epochs (0: final only)");
  train_flags.add_to(train);

  // eval
  auto* eval = app.add_subcommand("eval", "Per-sample metrics of a checkpoint on one corpus split");
  std::filesystem::path eval_config, eval_ckpt, eval_data, eval_out;
  std::string eval_split = "test";
  std::optional<double> eval_threshold;
  eval->add_option("--config", eval_config, "config.txt of the run")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Corpus directory containing manifest.txt")->required();
  eval->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--threshold", eval_threshold, "Binarization threshold (default: eval_threshold of the run)");
  eval->add_option("--out", eval_out, "Output directory for metrics.csv")->required();

  // infer
  auto* infer = app.add_subcommand("infer", "Probability maps and masks for every frame of one sequence");
  std::filesystem::path infer_config, infer_ckpt, infer_data, infer_out;
  double infer_threshold = 0.5;
  bool infer_raw = false;
  infer->add_option("--config", infer_config, "config.txt of the run")->required();
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  infer->add_option("--data", infer_data, "Sequence directory with frame_NNNN.pgm files")->required();
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_option("--threshold", infer_threshold, "Mask threshold on the probability");
  infer->add_flag("--raw", infer_raw, "Also write full-precision probabilities (probabilities.svsn)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and test the {2d,3d} x {CAB on/off} x {dice,ce} grid");
  RunFlags ablate_flags;
  std::filesystem::path ablate_data, ablate_out;
  std::size_t ablate_seeds = 3;
  ablate->add_option("--data", ablate_data, "Corpus directory containing manifest.txt")->required();
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_option("--seeds", ablate_seeds, "Seeds per variant (seed, seed+1, ...)");
  ablate_flags.add_to(ablate);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of analytic gradients");
  std::string gc_target = "all";
  std::size_t gc_trials = 10;
  std::uint64_t gc_seed = 0;
  std::vector<std::string> choices = gradcheck_targets();
  choices.push_back("all");
  gc->add_option("--target", gc_target, "Op to check")->check(CLI::IsMember(choices));
  gc->add_option("--trials", gc_trials, "Random configurations per target");
  gc->add_option("--seed", gc_seed, "Seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* shown = &app;
    for (auto* sub : app.get_subcommands()) shown = sub;
    out << shown->help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* shown = &app;
    for (auto* sub : app.get_subcommands()) shown = sub;
    err << shown->help();
    return 1;
  }

  try {
    if (synth->parsed()) {
      sc.height = sc.width = synth_hw;
      sc.vessels_min = sc.vessels_max = synth_vessels;
      return cmd_synth(synth_out, synth_sequences, sc, synth_seed, out);
    }
    if (train->parsed()) return cmd_train(train_flags.resolve(), train_data, train_out, checkpoint_every, out);
    if (eval->parsed()) {
      return cmd_eval(eval_config, eval_ckpt, eval_data, eval_split, eval_threshold, eval_out, out);
    }
    if (infer->parsed()) {
      return cmd_infer(infer_config, infer_ckpt, infer_data, infer_out, infer_threshold, infer_raw, out);
    }
    if (ablate->parsed()) return cmd_ablate(ablate_flags.resolve(), ablate_data, ablate_seeds, ablate_out, out);
    if (gc->parsed()) return cmd_gradcheck(gc_target, gc_trials, gc_seed, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace seqvessel
