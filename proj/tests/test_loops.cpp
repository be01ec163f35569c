#include <doctest.h>

#include "oracles.hpp"
#include "tacc/loops.hpp"

using namespace tacc;
using namespace tacc::loops;

TEST_CASE("loop order for the (i,j,k,l) -> (i,k,j,l) transpose") {
  // Source dims 0..3 = i,j,k,l; output is (i,k,j,l).
  const std::vector<int> perm{0, 2, 1, 3};
  CHECK(transpose_loop_order(perm, 4) == std::vector<int>{0, 2, 1, 3});
}

TEST_CASE("identity and rank-2 swap orders") {
  CHECK(transpose_loop_order(std::vector<int>{0, 1, 2}, 3) == std::vector<int>{0, 1, 2});
  // Both weights are 1; the dim at output position 0 (source dim 1) goes outside.
  CHECK(transpose_loop_order(std::vector<int>{1, 0}, 2) == std::vector<int>{1, 0});
}

TEST_CASE("loop order reaches the exhaustive minimum for every permutation up to rank 6") {
  for (int rank = 1; rank <= 6; ++rank) {
    std::vector<int> perm(static_cast<std::size_t>(rank));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      const auto order = transpose_loop_order(perm, rank);
      std::vector<int> sorted = order;
      std::sort(sorted.begin(), sorted.end());
      std::vector<int> ident(static_cast<std::size_t>(rank));
      std::iota(ident.begin(), ident.end(), 0);
      REQUIRE(sorted == ident);
      CHECK(loop_order_cost(perm, order) == oracle::order_cost(perm, order));
      CHECK(oracle::order_cost(perm, order) == oracle::min_order_cost(perm));
      CHECK(oracle::order_cost(perm, order) <= oracle::order_cost(perm, ident));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("tiling a 1024x1024 transpose") {
  TilingConfig cfg;
  cfg.transpose_tile = 32;
  const std::vector<std::int64_t> ext{1024, 1024};
  const auto nest = tile_transpose(make_transpose_nest(ext, std::vector<int>{1, 0}, 1.0), cfg);
  REQUIRE(nest.loops.size() == 4);
  CHECK(nest.loops[0].role == LoopRole::TileOuter);
  CHECK(nest.loops[1].role == LoopRole::TileOuter);
  CHECK(nest.loops[2].role == LoopRole::TileInner);
  CHECK(nest.loops[3].role == LoopRole::TileInner);
  for (const auto& l : nest.loops) CHECK(l.trip_count == 32);
  CHECK(nest.loops[0].parallel);
}

TEST_CASE("tiling the rank-4 example tiles the two innermost loops (j and l)") {
  TilingConfig cfg;
  cfg.transpose_tile = 32;
  const std::vector<std::int64_t> ext{64, 64, 64, 64};
  const auto nest = tile_transpose(make_transpose_nest(ext, std::vector<int>{0, 2, 1, 3}, 1.0, {"i", "j", "k", "l"}), cfg);
  std::vector<std::string> names;
  for (const auto& l : nest.loops) names.push_back(l.name);
  CHECK(names == std::vector<std::string>{"i", "k", "j.tile", "l.tile", "j", "l"});
}

TEST_CASE("tile no smaller than the extent leaves the nest unchanged") {
  TilingConfig cfg;
  cfg.transpose_tile = 32;
  const std::vector<std::int64_t> ext{8, 16, 4};
  const auto plain = make_transpose_nest(ext, std::vector<int>{2, 0, 1}, 1.0);
  const auto tiled = tile_transpose(plain, cfg);
  REQUIRE(tiled.loops.size() == plain.loops.size());
  for (std::size_t i = 0; i < plain.loops.size(); ++i) {
    CHECK(tiled.loops[i].dim == plain.loops[i].dim);
    CHECK(tiled.loops[i].trip_count == plain.loops[i].trip_count);
    CHECK(tiled.loops[i].role == LoopRole::Full);
  }
}

TEST_CASE("GEMM schedule trip counts") {
  TilingConfig cfg;
  cfg.mc = 64;
  cfg.nc = 256;
  cfg.kc = 128;
  cfg.mr = 4;
  cfg.nr = 8;
  const auto nest = schedule_gemm(256, 256, 256, cfg);
  std::vector<std::int64_t> trips;
  std::vector<std::string> names;
  for (const auto& l : nest.loops) {
    trips.push_back(l.trip_count);
    names.push_back(l.name);
  }
  CHECK(trips == std::vector<std::int64_t>{1, 2, 4, 32, 16});
  CHECK(names == std::vector<std::string>{"jc", "pc", "ic", "jr", "ir"});
  CHECK(nest.loops[1].pack.find("B-panel") != std::string::npos);
  CHECK(nest.loops[2].pack.find("A-panel") != std::string::npos);
  CHECK(nest.loops[2].parallel);
}

TEST_CASE("GEMM schedule degenerate and fringe cases") {
  const TilingConfig cfg;
  for (const auto& l : schedule_gemm(1, 1, 1, cfg).loops) CHECK(l.trip_count == 1);
  std::vector<MicroTile> tiles;
  for_each_micro_tile(1, 1, 1, cfg, [&](const MicroTile& t) { tiles.push_back(t); });
  REQUIRE(tiles.size() == 1);
  CHECK(tiles[0].rows == 1);
  CHECK(tiles[0].cols == 1);

  std::vector<std::int64_t> rows;
  for_each_micro_tile(5, 8, 3, cfg, [&](const MicroTile& t) { rows.push_back(t.rows); });
  CHECK(rows == std::vector<std::int64_t>{4, 1});
}

TEST_CASE("micro tiles cover the iteration space exactly once") {
  TilingConfig cfg;
  cfg.mc = 12;
  cfg.nc = 16;
  cfg.kc = 5;
  for (auto [m, n, k] : {std::tuple{37, 29, 11}, std::tuple{1, 100, 3}, std::tuple{64, 64, 64}}) {
    std::int64_t volume = 0, calls = 0;
    std::vector<int> hits(static_cast<std::size_t>(m * n * k), 0);
    for_each_micro_tile(m, n, k, cfg, [&](const MicroTile& t) {
      volume += t.rows * t.cols * t.depth;
      ++calls;
      for (std::int64_t i = 0; i < t.rows; ++i)
        for (std::int64_t j = 0; j < t.cols; ++j)
          for (std::int64_t p = 0; p < t.depth; ++p) ++hits[static_cast<std::size_t>(((t.row + i) * n + t.col + j) * k + t.depth_begin + p)];
    });
    CHECK(volume == static_cast<std::int64_t>(m) * n * k);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK(micro_call_count(m, n, k, cfg) == calls);
  }
}

TEST_CASE("derive tiling from cache sizes") {
  const auto cfg = derive_tiling(32 * 1024, 1024 * 1024, 16 * 1024 * 1024);
  CHECK(cfg.kc == 256);
  CHECK(cfg.mc == 256);
  CHECK(cfg.nc == 4096);
  CHECK(cfg.mr == 4);
  CHECK(cfg.nr == 8);
  const auto bigger = derive_tiling(32 * 1024, 1024 * 1024, 32 * 1024 * 1024);
  CHECK(bigger.nc == 8192);
  CHECK(bigger.kc == cfg.kc);
  CHECK(bigger.mc == cfg.mc);
  for (auto [l1, l2, l3] : {std::tuple{48 * 1024, 1280 * 1024, 30 * 1024 * 1024}, std::tuple{4096, 65536, 1 << 20}}) {
    const auto c = derive_tiling(l1, l2, l3);
    CHECK(c.kc * c.nr * 8 <= l1 / 2);
    CHECK(c.mc * c.kc * 8 <= l2 / 2);
    CHECK(c.kc * c.nc * 8 <= l3 / 2);
    CHECK_NOTHROW(check_tiling(c));
  }
}

TEST_CASE("tiny caches are rejected") {
  try {
    derive_tiling(256, 1024 * 1024, 16 * 1024 * 1024);
    FAIL("expected CacheTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CacheTooSmall);
  }
  CHECK_THROWS_AS(derive_tiling(32 * 1024, 1024, 16 * 1024 * 1024), Error);
}

TEST_CASE("invalid tiling configs") {
  TilingConfig cfg;
  cfg.mc = 6;  // not a multiple of mr = 4
  CHECK_THROWS_AS(check_tiling(cfg), Error);
  cfg = TilingConfig{};
  cfg.kc = 0;
  CHECK_THROWS_AS(check_tiling(cfg), Error);
}

TEST_CASE("nest printing shows trip counts and packing points") {
  const auto text = schedule_gemm(100, 100, 100, TilingConfig{}).str();
  CHECK(text.find("pack A-panel") != std::string::npos);
  CHECK(text.find("pack B-panel") != std::string::npos);
  CHECK(text.find("trips=") != std::string::npos);
}
