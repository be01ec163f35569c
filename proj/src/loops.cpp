#include "tacc/loops.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace tacc::loops {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

TilingConfig derive_tiling(std::int64_t cache_l1, std::int64_t cache_l2, std::int64_t cache_l3) {
  if (cache_l1 <= 0 || cache_l2 <= 0 || cache_l3 <= 0) {
    throw Error(ErrorKind::CacheTooSmall, "cache sizes must be positive");
  }
  constexpr std::int64_t elem = 8;
  TilingConfig cfg;
  cfg.mr = kDefaultMr;
  cfg.nr = kDefaultNr;
  cfg.cache_l1 = cache_l1;
  cfg.cache_l2 = cache_l2;
  cfg.cache_l3 = cache_l3;

  cfg.kc = (cache_l1 / 2) / (cfg.nr * elem) / 8 * 8;
  if (cfg.kc == 0) throw Error(ErrorKind::CacheTooSmall, "L1 cannot hold a Kc x Nr panel with Kc >= 8");
  cfg.mc = (cache_l2 / 2) / (cfg.kc * elem) / cfg.mr * cfg.mr;
  if (cfg.mc == 0) throw Error(ErrorKind::CacheTooSmall, "L2 cannot hold an Mr x Kc panel");
  cfg.nc = (cache_l3 / 2) / (cfg.kc * elem) / cfg.nr * cfg.nr;
  if (cfg.nc == 0) throw Error(ErrorKind::CacheTooSmall, "L3 cannot hold a Kc x Nr panel");
  return cfg;
}

void check_tiling(const TilingConfig& cfg) {
  auto positive = [](std::int64_t v, const char* name) {
    if (v < 1) throw Error(ErrorKind::InvalidConfig, std::string(name) + " must be >= 1");
  };
  positive(cfg.mc, "mc");
  positive(cfg.nc, "nc");
  positive(cfg.kc, "kc");
  positive(cfg.mr, "mr");
  positive(cfg.nr, "nr");
  positive(cfg.transpose_tile, "transpose_tile");
  if (cfg.mc % cfg.mr != 0) throw Error(ErrorKind::InvalidConfig, "mc must be a multiple of mr");
  if (cfg.nc % cfg.nr != 0) throw Error(ErrorKind::InvalidConfig, "nc must be a multiple of nr");
}

std::string_view to_string(LoopRole role) {
  switch (role) {
    case LoopRole::Full: return "full";
    case LoopRole::TileOuter: return "tile";
    case LoopRole::TileInner: return "intra-tile";
    case LoopRole::BlockN: return "nc";
    case LoopRole::BlockK: return "kc";
    case LoopRole::BlockM: return "mc";
    case LoopRole::MicroN: return "nr";
    case LoopRole::MicroM: return "mr";
  }
  return "?";
}

std::vector<std::int64_t> row_major_strides(std::span<const std::int64_t> extents) {
  std::vector<std::int64_t> strides(extents.size(), 1);
  for (std::size_t d = extents.size(); d-- > 1;) strides[d - 1] = strides[d] * extents[d];
  return strides;
}

// ---------------------------------------------------------------------------
// Transposes

namespace {

std::vector<int> output_positions(std::span<const int> perm) {
  std::vector<int> pos(perm.size());
  for (std::size_t q = 0; q < perm.size(); ++q) pos[static_cast<std::size_t>(perm[q])] = static_cast<int>(q);
  return pos;
}

}  // namespace

std::vector<int> transpose_loop_order(std::span<const int> perm, int rank) {
  const auto out_pos = output_positions(perm);
  std::vector<int> order(static_cast<std::size_t>(rank));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    const int wx = x + out_pos[static_cast<std::size_t>(x)];
    const int wy = y + out_pos[static_cast<std::size_t>(y)];
    if (wx != wy) return wx < wy;
    return out_pos[static_cast<std::size_t>(x)] < out_pos[static_cast<std::size_t>(y)];
  });
  return order;
}

std::int64_t loop_order_cost(std::span<const int> perm, std::span<const int> order) {
  const auto out_pos = output_positions(perm);
  const auto rank = static_cast<std::int64_t>(order.size());
  std::int64_t cost = 0;
  for (std::int64_t p = 0; p < rank; ++p) {
    const int d = order[static_cast<std::size_t>(p)];
    const std::int64_t weight = d + out_pos[static_cast<std::size_t>(d)];
    cost += weight * ((rank - 1) - p);
  }
  return cost;
}

LoopNest make_transpose_nest(std::span<const std::int64_t> src_extents, std::span<const int> perm, double alpha,
                             std::span<const int> order, std::vector<std::string> dim_names) {
  const std::size_t rank = src_extents.size();
  if (perm.size() != rank || order.size() != rank) {
    throw Error(ErrorKind::ShapeMismatch, "permutation rank does not match tensor rank");
  }
  if (dim_names.size() != rank) {
    dim_names.clear();
    for (std::size_t d = 0; d < rank; ++d) dim_names.push_back("d" + std::to_string(d));
  }

  TransposeBody body;
  body.src_extents.assign(src_extents.begin(), src_extents.end());
  body.src_strides = row_major_strides(src_extents);
  body.perm.assign(perm.begin(), perm.end());
  body.alpha = alpha;
  std::vector<std::int64_t> dst_extents;
  for (int p : perm) dst_extents.push_back(src_extents[static_cast<std::size_t>(p)]);
  const auto dst_strides = row_major_strides(dst_extents);
  body.dst_strides.assign(rank, 0);
  for (std::size_t q = 0; q < rank; ++q) body.dst_strides[static_cast<std::size_t>(perm[q])] = dst_strides[q];

  LoopNest nest;
  for (int d : order) {
    Loop loop;
    loop.name = dim_names[static_cast<std::size_t>(d)];
    loop.dim = d;
    loop.role = LoopRole::Full;
    loop.extent = src_extents[static_cast<std::size_t>(d)];
    loop.step = 1;
    loop.trip_count = loop.extent;
    nest.loops.push_back(loop);
  }
  if (!nest.loops.empty()) nest.loops.front().parallel = true;
  nest.body = std::move(body);
  return nest;
}

LoopNest make_transpose_nest(std::span<const std::int64_t> src_extents, std::span<const int> perm, double alpha,
                             std::vector<std::string> dim_names) {
  const auto order = transpose_loop_order(perm, static_cast<int>(perm.size()));
  return make_transpose_nest(src_extents, perm, alpha, order, std::move(dim_names));
}

LoopNest tile_transpose(const LoopNest& nest, const TilingConfig& cfg) {
  if (!std::holds_alternative<TransposeBody>(nest.body)) {
    throw Error(ErrorKind::Internal, "tile_transpose expects a transpose nest");
  }
  if (nest.loops.size() < 2) return nest;
  const std::int64_t tile = cfg.transpose_tile;

  LoopNest out;
  out.body = nest.body;
  const std::size_t split = nest.loops.size() - 2;
  out.loops.assign(nest.loops.begin(), nest.loops.begin() + static_cast<std::ptrdiff_t>(split));

  std::vector<Loop> inner;
  for (std::size_t i = split; i < nest.loops.size(); ++i) {
    Loop loop = nest.loops[i];
    loop.parallel = false;
    if (loop.extent > tile) {
      Loop outer = loop;
      outer.name = loop.name + ".tile";
      outer.role = LoopRole::TileOuter;
      outer.step = tile;
      outer.trip_count = ceil_div(loop.extent, tile);
      out.loops.push_back(outer);
      loop.role = LoopRole::TileInner;
      loop.trip_count = tile;
    }
    inner.push_back(loop);
  }
  out.loops.insert(out.loops.end(), inner.begin(), inner.end());
  for (auto& l : out.loops) l.parallel = false;
  out.loops.front().parallel = true;
  return out;
}

// ---------------------------------------------------------------------------
// GEMM

LoopNest schedule_gemm(std::int64_t m, std::int64_t n, std::int64_t k, const TilingConfig& cfg) {
  check_tiling(cfg);
  if (m < 1 || n < 1 || k < 1) throw Error(ErrorKind::ShapeMismatch, "GEMM dimensions must be >= 1");
  const std::int64_t nb = std::min(cfg.nc, n);
  const std::int64_t mb = std::min(cfg.mc, m);
  LoopNest nest;
  nest.loops = {
      Loop{"jc", 1, LoopRole::BlockN, n, cfg.nc, ceil_div(n, cfg.nc), false, ""},
      Loop{"pc", 2, LoopRole::BlockK, k, cfg.kc, ceil_div(k, cfg.kc), false, "pack B-panel (Kc x Nc)"},
      Loop{"ic", 0, LoopRole::BlockM, m, cfg.mc, ceil_div(m, cfg.mc), true, "pack A-panel (Mc x Kc)"},
      Loop{"jr", 1, LoopRole::MicroN, nb, cfg.nr, ceil_div(nb, cfg.nr), false, ""},
      Loop{"ir", 0, LoopRole::MicroM, mb, cfg.mr, ceil_div(mb, cfg.mr), false, ""},
  };
  nest.body = GemmMicroBody{cfg.mr, cfg.nr, std::min(cfg.kc, k)};
  return nest;
}

void for_each_micro_tile(std::int64_t m, std::int64_t n, std::int64_t k, const TilingConfig& cfg,
                         const std::function<void(const MicroTile&)>& fn) {
  check_tiling(cfg);
  for (std::int64_t jc = 0; jc < n; jc += cfg.nc) {
    const std::int64_t nb = std::min(cfg.nc, n - jc);
    for (std::int64_t pc = 0; pc < k; pc += cfg.kc) {
      const std::int64_t kb = std::min(cfg.kc, k - pc);
      for (std::int64_t ic = 0; ic < m; ic += cfg.mc) {
        const std::int64_t mb = std::min(cfg.mc, m - ic);
        for (std::int64_t jr = 0; jr < nb; jr += cfg.nr) {
          for (std::int64_t ir = 0; ir < mb; ir += cfg.mr) {
            fn(MicroTile{ic + ir, jc + jr, pc, std::min(cfg.mr, mb - ir), std::min(cfg.nr, nb - jr), kb});
          }
        }
      }
    }
  }
}

std::int64_t micro_call_count(std::int64_t m, std::int64_t n, std::int64_t k, const TilingConfig& cfg) {
  check_tiling(cfg);
  // Sum over (nc, kc, mc) blocks of ceil(nb / nr) * ceil(mb / mr).
  auto block_sum = [](std::int64_t extent, std::int64_t block, std::int64_t micro) {
    const std::int64_t full = extent / block;
    const std::int64_t rem = extent % block;
    return full * ceil_div(block, micro) + (rem ? ceil_div(rem, micro) : 0);
  };
  return block_sum(n, cfg.nc, cfg.nr) * ceil_div(k, cfg.kc) * block_sum(m, cfg.mc, cfg.mr);
}

// ---------------------------------------------------------------------------
// Printing

std::string LoopNest::str() const {
  std::ostringstream os;
  std::string indent;
  if (const auto* t = std::get_if<TransposeBody>(&body)) {
    os << "transpose perm=(";
    for (std::size_t i = 0; i < t->perm.size(); ++i) os << (i ? "," : "") << t->perm[i];
    os << ") alpha=" << t->alpha << "\n";
  } else {
    const auto& g = std::get<GemmMicroBody>(body);
    os << "gemm micro=" << g.mr << "x" << g.nr << " kc=" << g.kc << "\n";
  }
  for (const auto& loop : loops) {
    indent += "  ";
    os << indent << "for " << loop.name << " [" << to_string(loop.role) << "] extent=" << loop.extent
       << " step=" << loop.step << " trips=" << loop.trip_count;
    if (loop.parallel) os << " parallel";
    os << "\n";
    if (!loop.pack.empty()) os << indent << "  " << loop.pack << "\n";
  }
  indent += "  ";
  if (std::holds_alternative<TransposeBody>(body)) {
    os << indent << "dst[...] = alpha * src[...]\n";
  } else {
    const auto& g = std::get<GemmMicroBody>(body);
    os << indent << "micro-kernel C[" << g.mr << "x" << g.nr << "] += A[" << g.mr << "x" << g.kc << "] * B[" << g.kc
       << "x" << g.nr << "]\n";
  }
  return os.str();
}

}  // namespace tacc::loops
