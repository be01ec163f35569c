#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tacc/planner.hpp"

namespace tacc::loops {

struct TilingConfig {
  std::int64_t mc = 256;
  std::int64_t nc = 4096;
  std::int64_t kc = 256;
  std::int64_t mr = 4;
  std::int64_t nr = 8;
  std::int64_t cache_l1 = 32 * 1024;
  std::int64_t cache_l2 = 1024 * 1024;
  std::int64_t cache_l3 = 16 * 1024 * 1024;
  std::int64_t transpose_tile = 32;

  bool operator==(const TilingConfig&) const = default;
};

/// Register block of the portable micro-kernel.
inline constexpr std::int64_t kDefaultMr = 4;
inline constexpr std::int64_t kDefaultNr = 8;

/// Picks Mc/Nc/Kc so the Kc x Nr B-sliver fills at most half of L1, the
/// Mc x Kc A-panel half of L2 and the Kc x Nc B-panel half of L3 (doubles).
TilingConfig derive_tiling(std::int64_t cache_l1, std::int64_t cache_l2, std::int64_t cache_l3);

/// Throws InvalidConfig unless every size is positive and mc/nc are
/// multiples of mr/nr.
void check_tiling(const TilingConfig& cfg);

enum class LoopRole { Full, TileOuter, TileInner, BlockN, BlockK, BlockM, MicroN, MicroM };

std::string_view to_string(LoopRole role);

struct Loop {
  std::string name;
  int dim = 0;  // source dimension for transposes; 0 = M, 1 = N, 2 = K for GEMM
  LoopRole role = LoopRole::Full;
  std::int64_t extent = 1;  // elements of `dim` covered by the loop
  std::int64_t step = 1;    // elements advanced per iteration
  std::int64_t trip_count = 1;
  bool parallel = false;
  std::string pack;  // packing performed on entry, if any
};

struct TransposeBody {
  std::vector<std::int64_t> src_extents;
  std::vector<std::int64_t> src_strides;
  std::vector<std::int64_t> dst_strides;  // indexed by source dimension
  planner::Permutation perm;
  double alpha = 1.0;
};

struct GemmMicroBody {
  std::int64_t mr = kDefaultMr;
  std::int64_t nr = kDefaultNr;
  std::int64_t kc = 1;
};

struct LoopNest {
  std::vector<Loop> loops;
  std::variant<TransposeBody, GemmMicroBody> body;

  std::string str() const;
};

std::vector<std::int64_t> row_major_strides(std::span<const std::int64_t> extents);

/// Loop order for a transpose, as source dimensions outermost first.
/// Each dimension is weighted by its position in source plus destination
/// layout; lighter (outer) dimensions go outside, ties by output position.
std::vector<int> transpose_loop_order(std::span<const int> perm, int rank);

/// sum over loops of weight * ((rank - 1) - loop position); the quantity
/// transpose_loop_order minimizes.
std::int64_t loop_order_cost(std::span<const int> perm, std::span<const int> order);

/// Untiled transpose nest in the given loop order (source dimensions).
LoopNest make_transpose_nest(std::span<const std::int64_t> src_extents, std::span<const int> perm, double alpha,
                             std::span<const int> order, std::vector<std::string> dim_names = {});

/// Untiled nest using transpose_loop_order.
LoopNest make_transpose_nest(std::span<const std::int64_t> src_extents, std::span<const int> perm, double alpha,
                             std::vector<std::string> dim_names = {});

/// Tiles the two innermost loops by cfg.transpose_tile, hoisting the tile
/// loops above the intra-tile loops. Loops no longer than the tile are kept.
LoopNest tile_transpose(const LoopNest& nest, const TilingConfig& cfg);

/// BLIS-style nest: nc -> kc -> mc -> nr -> mr around an Mr x Nr x Kc body.
LoopNest schedule_gemm(std::int64_t m, std::int64_t n, std::int64_t k, const TilingConfig& cfg);

struct MicroTile {
  std::int64_t row = 0;  // first row of C
  std::int64_t col = 0;  // first column of C
  std::int64_t depth_begin = 0;
  std::int64_t rows = 0;  // <= mr
  std::int64_t cols = 0;  // <= nr
  std::int64_t depth = 0; // <= kc
};

/// Visits micro-kernel invocations in schedule order.
void for_each_micro_tile(std::int64_t m, std::int64_t n, std::int64_t k, const TilingConfig& cfg,
                         const std::function<void(const MicroTile&)>& fn);

/// Number of micro-kernel invocations of schedule_gemm(m, n, k, cfg).
std::int64_t micro_call_count(std::int64_t m, std::int64_t n, std::int64_t k, const TilingConfig& cfg);

}  // namespace tacc::loops
