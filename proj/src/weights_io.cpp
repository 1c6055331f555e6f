#include "blpnet/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace blpnet {

static_assert(std::numeric_limits<float>::is_iec559, "weight files store IEEE-754 binary32");

const char* to_string(WeightFormatErrc code) {
  switch (code) {
    case WeightFormatErrc::BadMagic: return "bad magic";
    case WeightFormatErrc::VersionMismatch: return "version mismatch";
    case WeightFormatErrc::Truncated: return "truncated";
    case WeightFormatErrc::DimensionOverflow: return "dimension overflow";
    case WeightFormatErrc::Malformed: return "malformed";
    case WeightFormatErrc::Io: return "i/o error";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[4] = {'B', 'L', 'P', 'W'};
// Largest tensor accepted on read: 2^31 elements.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n)
      throw WeightFormatError(WeightFormatErrc::Truncated, std::string("file ends inside ") + what);
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(std::to_integer<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::byte> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const std::string& name, const Tensor<float>& t) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max())
    throw WeightFormatError(WeightFormatErrc::Malformed, "tensor name too long: " + name.substr(0, 32));
  if (t.rank() > std::numeric_limits<std::uint8_t>::max())
    throw WeightFormatError(WeightFormatErrc::DimensionOverflow, "rank too large for " + name);
  w.le(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.le(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw WeightFormatError(WeightFormatErrc::DimensionOverflow, "dimension too large in " + name);
    w.le(static_cast<std::uint32_t>(d));
  }
  for (auto v : t.values()) w.f32(v);
}

NamedTensor<float> read_record(Reader& r) {
  const auto name_len = r.le<std::uint16_t>("record name length");
  const auto name_bytes = r.take(name_len, "record name");
  std::string name(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
  const auto rank = r.le<std::uint8_t>("record rank");
  if (rank == 0) throw WeightFormatError(WeightFormatErrc::Malformed, "tensor " + name + " has rank 0");
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const auto d = r.le<std::uint32_t>("record dimensions");
    if (d == 0) throw WeightFormatError(WeightFormatErrc::Malformed, "tensor " + name + " has a zero dimension");
    count *= d;
    if (count > kMaxElements)
      throw WeightFormatError(WeightFormatErrc::DimensionOverflow, "tensor " + name + " exceeds 2^31 elements");
    shape.push_back(d);
  }
  r.need(count * sizeof(float), "tensor values");
  std::vector<float> data(count);
  for (auto& v : data) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor values"));
  return {std::move(name), Tensor<float>(std::move(shape), std::move(data))};
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFormatError(WeightFormatErrc::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

void write_file(const std::vector<std::byte>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFormatError(WeightFormatErrc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightFormatError(WeightFormatErrc::Io, "short write to " + path.string());
}

}  // namespace

std::vector<std::byte> encode_weights(const ParameterStore<float>& params) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le(kWeightFormatVersion);
  w.le(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) write_record(w, t.name, t.value);
  return w.take();
}

ParameterStore<float> decode_weights(std::span<const std::byte> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw WeightFormatError(WeightFormatErrc::BadMagic, "not a BLPW weight file");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion)
    throw WeightFormatError(WeightFormatErrc::VersionMismatch, "file version " + std::to_string(version) +
                                                                   ", reader supports " +
                                                                   std::to_string(kWeightFormatVersion));
  const auto count = r.le<std::uint32_t>("record count");
  ParameterStore<float> ps;
  for (std::uint32_t i = 0; i < count; ++i) ps.tensors.push_back(read_record(r));
  if (!r.done()) throw WeightFormatError(WeightFormatErrc::Malformed, "trailing bytes after last record");
  return ps;
}

void save_weights(const ParameterStore<float>& params, const std::filesystem::path& path) {
  write_file(encode_weights(params), path);
}

ParameterStore<float> load_weights(const std::filesystem::path& path) { return decode_weights(read_file(path)); }

void save_features(const Tensor<float>& features, const std::filesystem::path& path) {
  ParameterStore<float> ps;
  ps.tensors.push_back({"features", features});
  save_weights(ps, path);
}

Tensor<float> load_features(const std::filesystem::path& path) {
  auto ps = load_weights(path);
  if (ps.tensors.size() != 1 || ps.tensors[0].name != "features")
    throw WeightFormatError(WeightFormatErrc::Malformed, path.string() + " does not hold a single 'features' tensor");
  return std::move(ps.tensors[0].value);
}

}  // namespace blpnet
