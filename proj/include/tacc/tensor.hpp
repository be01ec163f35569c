#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tacc {

/// Row-major dense tensor of doubles. A rank-0 tensor holds one element.
class DenseTensor {
public:
  DenseTensor();
  explicit DenseTensor(std::vector<std::int64_t> extents, double fill = 0.0);
  DenseTensor(std::vector<std::int64_t> extents, std::vector<double> data);

  /// Uniform values in [lo, hi) from a 64-bit Mersenne twister.
  static DenseTensor random(std::vector<std::int64_t> extents, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0);

  const std::vector<std::int64_t>& extents() const noexcept { return extents_; }
  const std::vector<std::int64_t>& strides() const noexcept { return strides_; }
  std::size_t rank() const noexcept { return extents_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& at(std::span<const std::int64_t> index);
  double at(std::span<const std::int64_t> index) const;

  bool operator==(const DenseTensor&) const = default;

private:
  std::vector<std::int64_t> extents_;
  std::vector<std::int64_t> strides_;
  std::vector<double> data_;
};

std::int64_t volume(std::span<const std::int64_t> extents);

double max_abs(const DenseTensor& t);
double max_abs_diff(const DenseTensor& a, const DenseTensor& b);

/// Binary tensor format: "DTNS", u32 version, u32 rank, u64 extents[rank],
/// then row-major little-endian float64 values.
inline constexpr std::uint32_t kDtnsVersion = 1;

std::string encode_dtns(const DenseTensor& t);
DenseTensor decode_dtns(std::string_view bytes);
void write_dtns(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor read_dtns(const std::filesystem::path& path);

}  // namespace tacc
