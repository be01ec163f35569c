#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tacc/accel.hpp"
#include "tacc/config.hpp"
#include "tacc/executor.hpp"
#include "tacc/ir.hpp"

namespace tacc::bench {

struct BenchCase {
  std::string name;
  std::string contraction;  // "out-a-b"
  std::map<std::string, std::int64_t> extents;
  int repeat = 10;
  ir::ContractionSpec spec;
};

/// One suite entry; malformed entries carry `error` instead of a case.
struct SuiteEntry {
  std::string name;
  std::optional<BenchCase> bench;
  std::string error;
};

/// Suite JSON: a list of cases or {"cases": [...]}. Each case has name,
/// contraction, extents (index -> int), optional "extent" default for
/// unlisted indices, optional repeat.
std::vector<SuiteEntry> parse_suite(std::string_view text);

/// The ablation ladder, least to most optimized.
enum class Rung { Naive, TtgtArbitraryPerm, TtgtBestPerm, TransposeOpt, Tiling, Microkernel };

inline constexpr Rung kLadder[] = {Rung::Naive,        Rung::TtgtArbitraryPerm, Rung::TtgtBestPerm,
                                   Rung::TransposeOpt, Rung::Tiling,            Rung::Microkernel};

std::string_view to_string(Rung rung);

struct BenchRow {
  std::string case_name;
  std::string rung;
  int repeat = 0;
  double min_time = 0.0;
  double mean_time = 0.0;
  std::int64_t flops = 0;
  double gflops = 0.0;  // flops / min_time / 1e9
  std::map<std::string, double> per_stage;  // mean seconds per stage
  std::int64_t microkernel_calls = 0;
  std::optional<double> rel_error;  // set when verified
  bool ok = true;
  std::string error;
};

struct BenchOptions {
  bool ablate = false;
  bool verify = false;
  std::optional<int> repeat;  // overrides each case's repeat
  std::uint64_t seed = 42;
};

/// Runs one rung `repeat` times on fixed random inputs.
BenchRow run_rung(const BenchCase& bc, Rung rung, const RunConfig& cfg, const BenchOptions& options);

/// Full-optimization rung only, or the whole ladder with `ablate`.
std::vector<BenchRow> run_case(const BenchCase& bc, const RunConfig& cfg, const BenchOptions& options);

std::string rows_to_text(const std::vector<BenchRow>& rows);
std::string rows_to_csv(const std::vector<BenchRow>& rows);
std::string rows_to_json(const std::vector<BenchRow>& rows);

/// Codesign workloads read from the same suite format.
std::vector<accel::Workload> workloads_from_suite(std::string_view text);

}  // namespace tacc::bench
