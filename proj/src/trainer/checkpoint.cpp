#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "seqvessel/trainer.hpp"

namespace seqvessel {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'S', 'N'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

const std::string kParamPrefix = "param/";
const std::string kMomentumPrefix = "momentum/";
const std::string kBufferPrefix = "buffer/";
const std::string kTrainerName = "trainer/state";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) throw FormatError(path_ + ": " + what);
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

// Trainer state travels as 16-bit limbs stored as exact float integers.
Tensor encode_state(const TrainerState& s) {
  const std::uint64_t words[6] = {s.seed, s.epoch, s.batch_in_epoch, s.global_step,
                                  std::bit_cast<std::uint64_t>(s.loss_sum), s.loss_count};
  Tensor t(TensorShape{24});
  for (std::size_t w = 0; w < 6; ++w) {
    for (std::size_t k = 0; k < 4; ++k) t[w * 4 + k] = static_cast<float>((words[w] >> (16 * k)) & 0xffffu);
  }
  return t;
}

TrainerState decode_state(const Tensor& t, const std::string& path) {
  if (t.shape() != TensorShape{24}) throw FormatError(path + ": malformed trainer state");
  std::uint64_t words[6] = {};
  for (std::size_t w = 0; w < 6; ++w) {
    for (std::size_t k = 0; k < 4; ++k) {
      const float v = t[w * 4 + k];
      if (!(v >= 0.0f && v <= 65535.0f) || v != static_cast<float>(static_cast<std::uint32_t>(v))) {
        throw FormatError(path + ": malformed trainer state");
      }
      words[w] |= static_cast<std::uint64_t>(v) << (16 * k);
    }
  }
  return {words[0], words[1], words[2], words[3], std::bit_cast<double>(words[4]), words[5]};
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::set<std::string> seen;
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (!seen.insert(name).second) throw FormatError("duplicate tensor name " + name);
    if (name.empty() || name.size() > kMaxNameLength) throw FormatError("invalid tensor name '" + name + "'");
    if (!t.defined()) throw FormatError("tensor " + name + " is undefined");
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape().dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("write failed for " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  Reader r(buf, name);
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError(name + ": bad magic (not an SVSN checkpoint)");
  r.bytes(4, "truncated header");
  const std::uint32_t version = r.u32("truncated header");
  if (version != kCheckpointVersion) {
    throw FormatError(name + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("truncated header");
  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("truncated tensor header");
    if (len == 0 || len > kMaxNameLength) throw FormatError(name + ": invalid tensor name length");
    std::string tname = r.bytes(len, "truncated tensor header");
    if (!seen.insert(tname).second) throw FormatError(name + ": duplicate tensor name " + tname);
    const std::uint32_t rank = r.u32("truncated tensor header");
    if (rank == 0 || rank > kMaxRank) throw FormatError(name + ": tensor " + tname + " has invalid rank");
    std::vector<std::size_t> dims;
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32("truncated tensor header");
      if (d == 0) throw FormatError(name + ": tensor " + tname + " has a zero dimension");
      dims.push_back(d);
      numel *= d;
    }
    r.need(numel * 4, "truncated tensor data");
    std::vector<float> values(numel);
    for (auto& v : values) v = std::bit_cast<float>(r.u32("truncated tensor data"));
    out.push_back({std::move(tname), Tensor::from(TensorShape(std::move(dims)), std::move(values))});
  }
  if (!r.done()) throw FormatError(name + ": trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const ParameterStore<float>& store, const std::filesystem::path& path,
                     const std::optional<TrainerState>& trainer) {
  std::vector<NamedTensor> tensors;
  for (const auto& [n, p] : store.params()) {
    tensors.push_back({kParamPrefix + n, p.value});
    tensors.push_back({kMomentumPrefix + n, p.momentum});
  }
  for (const auto& [n, b] : store.buffers()) tensors.push_back({kBufferPrefix + n, b});
  if (trainer) tensors.push_back({kTrainerName, encode_state(*trainer)});
  write_tensors(path, tensors);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::map<std::string, Tensor> values, momenta;
  Checkpoint ck;
  auto starts = [](const std::string& s, const std::string& p) { return s.compare(0, p.size(), p) == 0; };
  for (auto& [name, t] : read_tensors(path)) {
    if (starts(name, kParamPrefix)) {
      values.emplace(name.substr(kParamPrefix.size()), std::move(t));
    } else if (starts(name, kMomentumPrefix)) {
      momenta.emplace(name.substr(kMomentumPrefix.size()), std::move(t));
    } else if (starts(name, kBufferPrefix)) {
      ck.store.add_buffer(name.substr(kBufferPrefix.size()), std::move(t));
    } else if (name == kTrainerName) {
      ck.trainer = decode_state(t, file);
    } else {
      throw FormatError(file + ": unexpected tensor " + name);
    }
  }
  for (auto& [name, v] : values) {
    auto it = momenta.find(name);
    if (it == momenta.end()) throw FormatError(file + ": parameter " + name + " has no momentum tensor");
    if (it->second.shape() != v.shape()) throw FormatError(file + ": momentum of " + name + " has the wrong shape");
    Parameter<float>& p = ck.store.add(name, std::move(v));
    p.momentum = std::move(it->second);
    momenta.erase(it);
  }
  if (!momenta.empty()) throw FormatError(file + ": momentum tensor " + momenta.begin()->first + " has no parameter");
  return ck;
}

void restore_store(ParameterStore<float>& dst, const ParameterStore<float>& src) {
  auto mismatch = [](const std::string& name, const TensorShape& got, const TensorShape& want) {
    return ShapeError("checkpoint tensor " + name + " has shape " + got.str() + ", network expects " + want.str());
  };
  for (const auto& [name, p] : dst.params()) {
    if (!src.params().contains(name)) throw ShapeError("checkpoint lacks tensor " + name);
    const auto& q = src.params().at(name);
    if (q.value.shape() != p.value.shape()) throw mismatch(name, q.value.shape(), p.value.shape());
  }
  for (const auto& [name, _] : src.params()) {
    if (!dst.params().contains(name)) throw ShapeError("checkpoint tensor " + name + " is not part of the network");
  }
  for (const auto& [name, b] : dst.buffers()) {
    if (!src.buffers().contains(name)) throw ShapeError("checkpoint lacks tensor " + name);
    const auto& q = src.buffers().at(name);
    if (q.shape() != b.shape()) throw mismatch(name, q.shape(), b.shape());
  }
  for (const auto& [name, _] : src.buffers()) {
    if (!dst.buffers().contains(name)) throw ShapeError("checkpoint tensor " + name + " is not part of the network");
  }
  for (auto& [name, p] : dst.params()) {
    const auto& q = src.params().at(name);
    p.value = q.value;
    p.momentum = q.momentum;
    p.grad.fill(0.0f);
  }
  for (auto& [name, b] : dst.buffers()) b = src.buffers().at(name);
}

}  // namespace seqvessel
