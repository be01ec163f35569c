#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tacc/ir.hpp"
#include "tacc/planner.hpp"

namespace tacc::accel {

/// A fixed-function square GEMM engine: one call computes a tile x tile x tile block.
struct AccelSpec {
  std::string name;
  std::int64_t tile = 1;
  std::int64_t cycles_per_call = 1;
  double frequency_hz = 1e9;
  double avg_power_mw = 0.0;
  double area_um2 = 0.0;
};

inline constexpr double kDefaultBandwidth = 10e9;  // bytes / s

std::vector<AccelSpec> builtin_accels();

/// Reads a JSON list of specs (or {"accels": [...]}). Throws SchemaError
/// naming the offending field.
std::vector<AccelSpec> accels_from_json(std::string_view text);

struct GemmEstimate {
  std::int64_t cycles = 0;
  std::int64_t microcalls = 0;
};

GemmEstimate estimate_gemm(std::int64_t m, std::int64_t n, std::int64_t k, const AccelSpec& accel);

enum class Bound { Compute, Memory };
enum class Objective { Perf, PerfPerWatt };

std::string_view to_string(Bound bound);
std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);

struct AccelEstimate {
  AccelSpec accel;
  double est_seconds = 0.0;  // GEMM time on the accelerator
  std::int64_t est_cycles = 0;
  std::int64_t microcalls = 0;
  double transpose_seconds = 0.0;  // host-side permutes
  Bound bound = Bound::Compute;

  double total_seconds() const { return est_seconds + transpose_seconds; }
  /// Quantity minimized by `best`: seconds, or energy (mJ) for perf_per_watt.
  double score(Objective objective) const;
};

struct CodesignReport {
  std::vector<AccelEstimate> per_accel;  // in input order
  std::string best;

  const AccelEstimate& at(std::string_view name) const;
};

/// Host transpose time for a plan: 2 * bytes / bandwidth per executed permute.
double transpose_seconds(const ir::ContractionSpec& spec, const planner::TTGTPlan& plan, double bandwidth);

CodesignReport estimate_contraction(const ir::ContractionSpec& spec, const planner::TTGTPlan& plan,
                                    const std::vector<AccelSpec>& accels, double bandwidth = kDefaultBandwidth,
                                    Objective objective = Objective::Perf);

struct Workload {
  std::string name;
  ir::ContractionSpec spec;
};

struct AccelTotal {
  std::string name;
  double total_seconds = 0.0;
  double score = 0.0;
};

struct CodesignTable {
  std::vector<Workload> workloads;
  std::vector<CodesignReport> reports;  // one per workload
  std::vector<AccelTotal> totals;       // one per accel, in input order
  std::string best;
  Objective objective = Objective::Perf;
};

/// Plans every workload with select_ttgt and estimates it on every accel.
CodesignTable codesign_sweep(const std::vector<Workload>& workloads, const std::vector<AccelSpec>& accels,
                             double bandwidth = kDefaultBandwidth, Objective objective = Objective::Perf);

std::string to_csv(const CodesignTable& table);
std::string to_json(const CodesignTable& table);

}  // namespace tacc::accel
