#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "seqvessel/data.hpp"

namespace seqvessel {

namespace {

std::string indexed_name(const char* prefix, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.pgm", prefix, index);
  return buf;
}

// Collects <prefix>_NNNN.pgm files; verifies the indices run 1..n.
std::vector<std::filesystem::path> indexed_files(const std::filesystem::path& dir, const std::string& prefix) {
  const std::regex pattern(prefix + "_([0-9]{4,})\\.pgm");
  std::map<std::size_t, std::filesystem::path> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace(std::stoul(m[1].str()), entry.path());
  }
  std::vector<std::filesystem::path> out;
  std::size_t expect = 1;
  for (const auto& [index, path] : found) {
    if (index != expect) {
      throw FormatError(dir.string() + ": non-contiguous " + prefix + " indices (expected " +
                        std::to_string(expect) + ", found " + std::to_string(index) + ")");
    }
    out.push_back(path);
    ++expect;
  }
  return out;
}

}  // namespace

Sequence load_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("sequence directory not found: " + dir.string());
  Sequence seq;
  seq.id = dir.filename().string();
  if (seq.id.empty()) seq.id = dir.parent_path().filename().string();
  const auto frame_files = indexed_files(dir, "frame");
  if (frame_files.empty()) throw FormatError(dir.string() + ": no frame_NNNN.pgm files");
  const auto mask_files = indexed_files(dir, "mask");
  if (!mask_files.empty() && mask_files.size() != frame_files.size()) {
    throw FormatError(dir.string() + ": " + std::to_string(mask_files.size()) + " masks for " +
                      std::to_string(frame_files.size()) + " frames");
  }
  std::size_t w = 0, h = 0;
  auto check_size = [&](const GrayImage& img, const std::filesystem::path& p) {
    if (w == 0) {
      w = img.width;
      h = img.height;
    } else if (img.width != w || img.height != h) {
      throw FormatError(p.string() + ": size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " disagrees with " + std::to_string(w) + "x" + std::to_string(h));
    }
  };
  for (const auto& p : frame_files) {
    GrayImage img = read_pgm(p);
    check_size(img, p);
    seq.frames.push_back(image_to_tensor(img));
  }
  for (const auto& p : mask_files) {
    GrayImage img = read_pgm(p);
    check_size(img, p);
    seq.masks.push_back(image_to_mask(img));
  }
  return seq;
}

void write_sequence(const Sequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    write_pgm(dir / indexed_name("frame", i + 1), tensor_to_image(seq.frames[i]));
  }
  for (std::size_t i = 0; i < seq.masks.size(); ++i) {
    write_pgm(dir / indexed_name("mask", i + 1), mask_to_image(seq.masks[i]));
  }
}

std::vector<Sample> make_windows(const Sequence& seq, Purpose purpose, std::size_t length) {
  if (length < 2) throw std::invalid_argument("window length must be >= 2");
  const std::size_t n = seq.frames.size();
  if (n == 0) throw std::invalid_argument("sequence " + seq.id + " has no frames");
  const bool labeled = !seq.masks.empty();
  if (purpose == Purpose::train) {
    if (!labeled) throw std::invalid_argument("sequence " + seq.id + " has no masks; cannot build training windows");
    if (n < length) {
      throw std::invalid_argument("sequence " + seq.id + " has " + std::to_string(n) + " frames; training needs >= " +
                                  std::to_string(length));
    }
  }
  const std::size_t h = seq.frames.front().dim(0), w = seq.frames.front().dim(1);
  const std::size_t before = length - 2;  // frames preceding the target

  // 1-based centers.
  const std::size_t first = purpose == Purpose::train ? before + 1 : 1;
  const std::size_t last = purpose == Purpose::train ? n - 1 : n;

  std::vector<Sample> out;
  for (std::size_t i = first; i <= last; ++i) {
    Sample s;
    s.sequence_id = seq.id;
    s.center = i;
    s.window.target_index = before;
    std::vector<float> data;
    data.reserve(length * h * w);
    for (std::size_t k = 0; k < length; ++k) {
      // Frame index i - before + k, clamped into [1, n].
      const long idx = static_cast<long>(i) - static_cast<long>(before) + static_cast<long>(k);
      const auto j = static_cast<std::size_t>(std::clamp<long>(idx, 1, static_cast<long>(n)));
      const Tensor& f = seq.frames[j - 1];
      if (f.dim(0) != h || f.dim(1) != w) throw ShapeError("sequence " + seq.id + " frames differ in size");
      data.insert(data.end(), f.data().begin(), f.data().end());
    }
    s.window.frames = Tensor::from(TensorShape{length, h, w}, std::move(data));
    if (labeled) s.target_mask = seq.masks[i - 1];
    out.push_back(std::move(s));
  }
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open manifest " + file.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string dir, split, extra;
    if (!(ls >> dir >> split) || (ls >> extra)) {
      throw FormatError(file.string() + ":" + std::to_string(lineno) + ": expected '<sequence_dir> <split>'");
    }
    entries.push_back({dir, parse_split(split)});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write manifest " + file.string());
  for (const auto& e : entries) out << e.dir << ' ' << to_string(e.split) << '\n';
}

std::vector<Split> default_splits(std::size_t n) {
  const auto n_train = static_cast<std::size_t>(std::lround(0.5 * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::lround(0.25 * static_cast<double>(n))));
  std::vector<Split> out(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) out[i] = Split::train;
    else if (i < n_train + n_val) out[i] = Split::val;
  }
  return out;
}

std::vector<ManifestEntry> write_synthetic_corpus(const std::filesystem::path& root, std::size_t count,
                                                  const SynthConfig& cfg, std::uint64_t seed) {
  std::filesystem::create_directories(root);
  const auto splits = default_splits(count);
  const CounterRng base(seed);
  std::vector<ManifestEntry> entries;
  for (std::size_t k = 0; k < count; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu", k + 1);
    CounterRng rng = base.split(k + 1);
    write_sequence(synthesize(cfg, rng, name), root / name);
    entries.push_back({name, splits[k]});
  }
  write_manifest(root / "manifest.txt", entries);
  return entries;
}

}  // namespace seqvessel
