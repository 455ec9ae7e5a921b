#include "vtec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vtec/errors.hpp"

namespace vtec {

namespace {

constexpr char kMagic[8] = {'V', 'T', 'E', 'C', 'B', 'N', 'N', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(std::uint32_t(s.size()));
    out_.append(s);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(char((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    const auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ParseError("checkpoint length mismatch: truncated at byte " + std::to_string(pos_), 0);
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string save_model(const Network& net, const Normalizer& normalizer, std::string_view provenance) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(std::uint32_t(net.spec().input_dim));
  w.str(net.spec().architecture());
  w.str(kEncodingId);
  w.u32(std::uint32_t(kEncodedDim));
  for (double m : normalizer.mean) w.f64(m);
  for (double s : normalizer.stddev) w.f64(s);
  w.f64(normalizer.target_mean);
  w.f64(normalizer.target_stddev);
  w.str(provenance);
  w.u64(net.params().size());
  for (double p : net.params()) w.f64(p);
  return w.take();
}

Model load_model(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("not a model checkpoint (bad magic)", 0);
  r.bytes(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                         std::to_string(kCheckpointVersion) + ")", 0);
  const int input_dim = int(r.u32());
  const std::string arch = r.str();
  const std::string encoding = r.str();
  if (encoding != kEncodingId) throw ParseError("checkpoint input encoding '" + encoding + "' unsupported", 0);
  if (r.u32() != kEncodedDim) throw ParseError("checkpoint normalizer channel count mismatch", 0);
  Normalizer norm;
  for (auto& m : norm.mean) m = r.f64();
  for (auto& s : norm.stddev) s = r.f64();
  norm.target_mean = r.f64();
  norm.target_stddev = r.f64();
  std::string provenance = r.str();

  NetworkSpec spec;
  try {
    spec = parse_architecture(arch, input_dim);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint architecture: ") + e.what(), 0);
  }
  Network net(spec);
  const std::uint64_t count = r.u64();
  if (count != net.params().size())
    throw ParseError("checkpoint length mismatch: " + std::to_string(count) + " parameters for " + arch +
                         " (expected " + std::to_string(net.params().size()) + ")", 0);
  for (auto& p : net.params()) p = r.f64();
  if (r.remaining() != 0) throw ParseError("checkpoint length mismatch: trailing bytes", 0);
  return Model{std::move(net), norm, std::move(provenance)};
}

void save_model_file(const std::filesystem::path& path, const Network& net, const Normalizer& normalizer,
                     std::string_view provenance) {
  const std::string bytes = save_model(net, normalizer, provenance);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_model(buf.str());
}

}  // namespace vtec
