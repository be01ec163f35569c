#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tacc/ir.hpp"
#include "tacc/loops.hpp"
#include "tacc/planner.hpp"
#include "tacc/tensor.hpp"

namespace tacc::exec {

/// Computes one Mr x Nr block of C from packed panels:
///   a[p * mr + i] (Mr x Kc, column of Mr per p), b[p * nr + j] (Kc x Nr),
///   c[i * ldc + j] for i < rows, j < cols.
/// c <- (accumulate ? c : 0) + sum_{p < kc} a[i, p] * b[p, j], p ascending.
class MicroKernel {
public:
  virtual ~MicroKernel() = default;
  virtual std::int64_t mr() const = 0;
  virtual std::int64_t nr() const = 0;
  virtual std::string name() const = 0;
  virtual void compute(const double* a, const double* b, double* c, std::int64_t ldc, std::int64_t kc,
                       std::int64_t rows, std::int64_t cols, bool accumulate) const = 0;
};

/// Register-blocked kernel; bit-identical to ScalarMicroKernel.
class ReferenceMicroKernel final : public MicroKernel {
public:
  explicit ReferenceMicroKernel(std::int64_t mr = loops::kDefaultMr, std::int64_t nr = loops::kDefaultNr);
  std::int64_t mr() const override { return mr_; }
  std::int64_t nr() const override { return nr_; }
  std::string name() const override { return "reference"; }
  void compute(const double* a, const double* b, double* c, std::int64_t ldc, std::int64_t kc, std::int64_t rows,
               std::int64_t cols, bool accumulate) const override;

private:
  std::int64_t mr_;
  std::int64_t nr_;
};

/// One dot product per C element, no register blocking.
class ScalarMicroKernel final : public MicroKernel {
public:
  explicit ScalarMicroKernel(std::int64_t mr = loops::kDefaultMr, std::int64_t nr = loops::kDefaultNr);
  std::int64_t mr() const override { return mr_; }
  std::int64_t nr() const override { return nr_; }
  std::string name() const override { return "scalar"; }
  void compute(const double* a, const double* b, double* c, std::int64_t ldc, std::int64_t kc, std::int64_t rows,
               std::int64_t cols, bool accumulate) const override;

private:
  std::int64_t mr_;
  std::int64_t nr_;
};

std::unique_ptr<MicroKernel> reference_microkernel(std::int64_t mr = loops::kDefaultMr,
                                                   std::int64_t nr = loops::kDefaultNr);

struct ExecutionReport {
  double wall_time = 0.0;
  std::int64_t flops = 0;
  double gflops = 0.0;
  std::map<std::string, double> per_stage;
  std::int64_t microkernel_calls = 0;
};

enum class TransposeStrategy { Naive, Optimized };
enum class GemmStrategy { Naive, Tiled };

struct ExecOptions {
  TransposeStrategy transpose = TransposeStrategy::Optimized;
  GemmStrategy gemm = GemmStrategy::Tiled;
  int workers = 1;
};

// ---------------------------------------------------------------------------
// Kernels

/// C[out] = beta * C_in + alpha * sum A * B by a plain loop nest. C_in may be
/// null only for Overwrite.
DenseTensor naive_contract(const ir::ContractionSpec& spec, const DenseTensor& a, const DenseTensor& b,
                           const DenseTensor* c_in = nullptr);

/// Runs a transpose LoopNest. With `accumulate` the result is added to dst.
void run_transpose_nest(const loops::LoopNest& nest, std::span<const double> src, std::span<double> dst,
                        bool accumulate, int workers = 1);

/// dst.extents[d] = src.extents[perm[d]], dst = alpha * permuted src.
DenseTensor permute(const DenseTensor& src, std::span<const int> perm, double alpha = 1.0,
                    const loops::TilingConfig& cfg = {}, TransposeStrategy strategy = TransposeStrategy::Optimized,
                    int workers = 1);

/// Like permute but writes (or adds) into an existing tensor of the permuted shape.
void permute_into(const DenseTensor& src, std::span<const int> perm, double alpha, DenseTensor& dst, bool accumulate,
                  const loops::TilingConfig& cfg = {}, TransposeStrategy strategy = TransposeStrategy::Optimized,
                  int workers = 1);

/// Row-major C (m x n) = (accumulate ? C : 0) + A (m x k) * B (k x n).
/// Returns the number of micro-kernel invocations.
std::int64_t tiled_gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::int64_t m,
                        std::int64_t n, std::int64_t k, const loops::TilingConfig& cfg, const MicroKernel& mk,
                        bool accumulate, int workers = 1);

/// i-j-p triple loop, p ascending.
void naive_gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::int64_t m,
                std::int64_t n, std::int64_t k, bool accumulate);

struct TTGTResult {
  DenseTensor tensor;
  ExecutionReport report;
};

TTGTResult execute_ttgt(const planner::TTGTPlan& plan, const ir::ContractionSpec& spec, const DenseTensor& a,
                        const DenseTensor& b, const DenseTensor* c_in, const loops::TilingConfig& cfg,
                        const MicroKernel& mk, const ExecOptions& options = {});

/// max |got - ref| / max(max|ref|, |alpha| max|A| max|B|); compared against 1e-12 * k.
double relative_error(const DenseTensor& got, const DenseTensor& ref, double alpha, const DenseTensor& a,
                      const DenseTensor& b);

// ---------------------------------------------------------------------------
// Programs

/// Supplies values for tensors read before any write.
using Initializer = std::function<DenseTensor(const std::string& name, const std::vector<std::int64_t>& extents)>;

/// Seeds each tensor from `seed` mixed with a hash of its name.
Initializer random_initializer(std::uint64_t seed);
Initializer const_initializer(double value);

enum class PlanChoice { Best, First };

struct ProgramOptions {
  ExecOptions exec;
  PlanChoice plan = PlanChoice::Best;
  /// Evaluate every contraction with naive_contract over a left-deep order.
  bool naive_oracle = false;
  Initializer initializer;
};

struct StepReport {
  std::string description;
  std::optional<planner::TTGTPlan> plan;
  ExecutionReport report;
};

struct ProgramResult {
  std::map<std::string, DenseTensor> tensors;
  std::vector<StepReport> steps;
};

ProgramResult run_program(const ir::Module& module, std::map<std::string, DenseTensor> inputs,
                          const loops::TilingConfig& cfg, const MicroKernel& mk, const ProgramOptions& options = {});

}  // namespace tacc::exec
