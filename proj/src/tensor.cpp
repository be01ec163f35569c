#include "tacc/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "tacc/error.hpp"
#include "tacc/loops.hpp"

namespace tacc {

std::int64_t volume(std::span<const std::int64_t> extents) {
  std::int64_t v = 1;
  for (auto e : extents) {
    if (e < 1) throw Error(ErrorKind::ShapeMismatch, "tensor extents must be >= 1");
    if (__builtin_mul_overflow(v, e, &v)) throw Error(ErrorKind::Overflow, "tensor volume overflows");
  }
  return v;
}

DenseTensor::DenseTensor() : data_(1, 0.0) {}

DenseTensor::DenseTensor(std::vector<std::int64_t> extents, double fill)
    : extents_(std::move(extents)),
      strides_(loops::row_major_strides(extents_)),
      data_(static_cast<std::size_t>(volume(extents_)), fill) {}

DenseTensor::DenseTensor(std::vector<std::int64_t> extents, std::vector<double> data)
    : extents_(std::move(extents)), strides_(loops::row_major_strides(extents_)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != volume(extents_)) {
    throw Error(ErrorKind::ShapeMismatch, "data size does not match extents");
  }
}

DenseTensor DenseTensor::random(std::vector<std::int64_t> extents, std::uint64_t seed, double lo, double hi) {
  DenseTensor t(std::move(extents));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

namespace {

std::size_t offset_of(const std::vector<std::int64_t>& extents, const std::vector<std::int64_t>& strides,
                      std::span<const std::int64_t> index) {
  if (index.size() != extents.size()) throw Error(ErrorKind::ShapeMismatch, "index rank mismatch");
  std::int64_t off = 0;
  for (std::size_t d = 0; d < index.size(); ++d) {
    if (index[d] < 0 || index[d] >= extents[d]) throw Error(ErrorKind::ShapeMismatch, "index out of bounds");
    off += index[d] * strides[d];
  }
  return static_cast<std::size_t>(off);
}

}  // namespace

double& DenseTensor::at(std::span<const std::int64_t> index) {
  return data_[offset_of(extents_, strides_, index)];
}

double DenseTensor::at(std::span<const std::int64_t> index) const {
  return data_[offset_of(extents_, strides_, index)];
}

double max_abs(const DenseTensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  if (a.extents() != b.extents()) throw Error(ErrorKind::ShapeMismatch, "cannot compare tensors of different shape");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---------------------------------------------------------------------------
// DTNS

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorKind::IoError, "truncated DTNS data");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string encode_dtns(const DenseTensor& t) {
  std::string out = "DTNS";
  put_le<std::uint32_t>(out, kDtnsVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.extents()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
  out.reserve(out.size() + t.size() * 8);
  for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

DenseTensor decode_dtns(std::string_view bytes) {
  if (bytes.substr(0, 4) != "DTNS") throw Error(ErrorKind::IoError, "bad DTNS magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kDtnsVersion) {
    throw Error(ErrorKind::IoError, "unsupported DTNS version " + std::to_string(version));
  }
  const auto rank = get_le<std::uint32_t>(bytes, pos);
  std::vector<std::int64_t> extents;
  for (std::uint32_t d = 0; d < rank; ++d) {
    const auto e = get_le<std::uint64_t>(bytes, pos);
    if (e == 0 || e > (std::uint64_t{1} << 40)) throw Error(ErrorKind::IoError, "invalid DTNS extent");
    extents.push_back(static_cast<std::int64_t>(e));
  }
  const auto count = static_cast<std::size_t>(volume(extents));
  if (bytes.size() - pos != count * 8) throw Error(ErrorKind::IoError, "DTNS payload size does not match extents");
  std::vector<double> data(count);
  for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  return DenseTensor(std::move(extents), std::move(data));
}

void write_dtns(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_dtns(t);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "failed writing '" + path.string() + "'");
}

DenseTensor read_dtns(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_dtns(ss.str());
}

}  // namespace tacc
