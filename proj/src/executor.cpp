#include "tacc/executor.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "tacc/error.hpp"

namespace tacc::exec {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

/// Runs fn(lo, hi) over [0, count) split into `workers` contiguous chunks.
template <typename Fn>
void parallel_chunks(std::int64_t count, int workers, Fn&& fn) {
  const std::int64_t w = std::clamp<std::int64_t>(workers, 1, std::max<std::int64_t>(count, 1));
  if (w <= 1) {
    fn(std::int64_t{0}, count);
    return;
  }
  std::vector<std::thread> threads;
  const std::int64_t chunk = ceil_div(count, w);
  for (std::int64_t lo = chunk; lo < count; lo += chunk) {
    threads.emplace_back([&fn, lo, hi = std::min(count, lo + chunk)] { fn(lo, hi); });
  }
  fn(std::int64_t{0}, std::min(count, chunk));
  for (auto& t : threads) t.join();
}

void check_shape(const DenseTensor& t, const std::vector<std::int64_t>& expected, const char* what) {
  if (t.extents() != expected) throw Error(ErrorKind::ShapeMismatch, std::string(what) + " has the wrong shape");
}

}  // namespace

// ---------------------------------------------------------------------------
// Micro-kernels

ReferenceMicroKernel::ReferenceMicroKernel(std::int64_t mr, std::int64_t nr) : mr_(mr), nr_(nr) {
  if (mr < 1 || nr < 1) throw Error(ErrorKind::InvalidConfig, "micro-kernel block must be at least 1x1");
}

ScalarMicroKernel::ScalarMicroKernel(std::int64_t mr, std::int64_t nr) : mr_(mr), nr_(nr) {
  if (mr < 1 || nr < 1) throw Error(ErrorKind::InvalidConfig, "micro-kernel block must be at least 1x1");
}

namespace {

template <int MR, int NR>
void fixed_kernel(const double* a, const double* b, double* c, std::int64_t ldc, std::int64_t kc,
                  std::int64_t rows, std::int64_t cols, bool accumulate) {
  double acc[MR][NR] = {};
  for (std::int64_t p = 0; p < kc; ++p) {
    const double* ap = a + p * MR;
    const double* bp = b + p * NR;
    for (int i = 0; i < MR; ++i) {
      const double ai = ap[i];
      for (int j = 0; j < NR; ++j) acc[i][j] += ai * bp[j];
    }
  }
  for (std::int64_t i = 0; i < rows; ++i) {
    double* ci = c + i * ldc;
    if (accumulate) {
      for (std::int64_t j = 0; j < cols; ++j) ci[j] += acc[i][j];
    } else {
      for (std::int64_t j = 0; j < cols; ++j) ci[j] = acc[i][j];
    }
  }
}

}  // namespace

void ReferenceMicroKernel::compute(const double* a, const double* b, double* c, std::int64_t ldc, std::int64_t kc,
                                   std::int64_t rows, std::int64_t cols, bool accumulate) const {
  if (mr_ == 4 && nr_ == 8) return fixed_kernel<4, 8>(a, b, c, ldc, kc, rows, cols, accumulate);
  if (mr_ == 8 && nr_ == 4) return fixed_kernel<8, 4>(a, b, c, ldc, kc, rows, cols, accumulate);
  if (mr_ == 4 && nr_ == 4) return fixed_kernel<4, 4>(a, b, c, ldc, kc, rows, cols, accumulate);

  std::vector<double> acc(static_cast<std::size_t>(mr_ * nr_), 0.0);
  for (std::int64_t p = 0; p < kc; ++p) {
    for (std::int64_t i = 0; i < mr_; ++i) {
      const double ai = a[p * mr_ + i];
      for (std::int64_t j = 0; j < nr_; ++j) acc[static_cast<std::size_t>(i * nr_ + j)] += ai * b[p * nr_ + j];
    }
  }
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) {
      const double v = acc[static_cast<std::size_t>(i * nr_ + j)];
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + v : v;
    }
  }
}

void ScalarMicroKernel::compute(const double* a, const double* b, double* c, std::int64_t ldc, std::int64_t kc,
                                std::int64_t rows, std::int64_t cols, bool accumulate) const {
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < kc; ++p) s += a[p * mr_ + i] * b[p * nr_ + j];
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

std::unique_ptr<MicroKernel> reference_microkernel(std::int64_t mr, std::int64_t nr) {
  return std::make_unique<ReferenceMicroKernel>(mr, nr);
}

// ---------------------------------------------------------------------------
// Naive contraction

DenseTensor naive_contract(const ir::ContractionSpec& spec, const DenseTensor& a, const DenseTensor& b,
                           const DenseTensor* c_in) {
  const auto cls = ir::classify_indices(spec.out_labels, spec.a_labels, spec.b_labels);
  check_shape(a, spec.extents_of(spec.a_labels), "A");
  check_shape(b, spec.extents_of(spec.b_labels), "B");
  const auto out_extents = spec.extents_of(spec.out_labels);
  const bool accumulate = spec.accumulate != ir::Accumulate::Overwrite;
  if (accumulate) {
    if (c_in == nullptr) throw Error(ErrorKind::ShapeMismatch, "accumulating contraction needs C_in");
    check_shape(*c_in, out_extents, "C_in");
  }
  const double alpha = spec.accumulate == ir::Accumulate::Subtract ? -spec.alpha : spec.alpha;

  // Loop order: output labels, then contracted labels.
  std::vector<std::string> loop_labels = spec.out_labels;
  loop_labels.insert(loop_labels.end(), cls.contracted.begin(), cls.contracted.end());
  const std::size_t depth = loop_labels.size();
  const std::size_t out_depth = spec.out_labels.size();

  auto strides_for = [&](const std::vector<std::string>& labels, const DenseTensor& t) {
    std::vector<std::int64_t> s(depth, 0);
    for (std::size_t l = 0; l < depth; ++l) {
      auto it = std::find(labels.begin(), labels.end(), loop_labels[l]);
      if (it != labels.end()) s[l] = t.strides()[static_cast<std::size_t>(it - labels.begin())];
    }
    return s;
  };
  const auto sa = strides_for(spec.a_labels, a);
  const auto sb = strides_for(spec.b_labels, b);
  std::vector<std::int64_t> ext(depth);
  for (std::size_t l = 0; l < depth; ++l) ext[l] = spec.extent(loop_labels[l]);

  DenseTensor c(out_extents);
  std::int64_t c_off = 0;
  std::vector<std::int64_t> idx(depth, 0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();

  // Odometer over the output indices; inner odometer over contracted ones.
  while (true) {
    std::int64_t a_off = 0, b_off = 0;
    for (std::size_t l = 0; l < out_depth; ++l) {
      a_off += idx[l] * sa[l];
      b_off += idx[l] * sb[l];
    }
    double s = 0.0;
    std::fill(idx.begin() + static_cast<std::ptrdiff_t>(out_depth), idx.end(), 0);
    while (true) {
      std::int64_t ao = a_off, bo = b_off;
      for (std::size_t l = out_depth; l < depth; ++l) {
        ao += idx[l] * sa[l];
        bo += idx[l] * sb[l];
      }
      s += pa[ao] * pb[bo];
      std::size_t l = depth;
      bool wrapped = true;
      while (l > out_depth) {
        --l;
        if (++idx[l] < ext[l]) {
          wrapped = false;
          break;
        }
        idx[l] = 0;
      }
      if (wrapped) break;
    }
    c.data()[static_cast<std::size_t>(c_off)] =
        accumulate ? c_in->data()[static_cast<std::size_t>(c_off)] + alpha * s : alpha * s;
    ++c_off;

    std::size_t l = out_depth;
    bool wrapped = true;
    while (l > 0) {
      --l;
      if (++idx[l] < ext[l]) {
        wrapped = false;
        break;
      }
      idx[l] = 0;
    }
    if (wrapped) break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Transposes

namespace {

struct NestRunner {
  const loops::LoopNest& nest;
  const loops::TransposeBody& body;
  const double* src;
  double* dst;
  bool accumulate;
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;

  void run(std::size_t level, std::int64_t src_off, std::int64_t dst_off) {
    if (level == nest.loops.size()) {
      const double v = body.alpha * src[src_off];
      dst[dst_off] = accumulate ? dst[dst_off] + v : v;
      return;
    }
    const auto& loop = nest.loops[level];
    const auto d = static_cast<std::size_t>(loop.dim);
    if (loop.role == loops::LoopRole::TileOuter) {
      const std::int64_t saved_lo = lo[d], saved_hi = hi[d];
      for (std::int64_t t = saved_lo; t < saved_hi; t += loop.step) {
        lo[d] = t;
        hi[d] = std::min(t + loop.step, saved_hi);
        run(level + 1, src_off, dst_off);
      }
      lo[d] = saved_lo;
      hi[d] = saved_hi;
      return;
    }
    const std::int64_t ss = body.src_strides[d], ds = body.dst_strides[d];
    if (level + 1 == nest.loops.size()) {
      const double* s = src + src_off;
      double* o = dst + dst_off;
      const double alpha = body.alpha;
      if (accumulate) {
        for (std::int64_t i = lo[d]; i < hi[d]; ++i) o[i * ds] += alpha * s[i * ss];
      } else {
        for (std::int64_t i = lo[d]; i < hi[d]; ++i) o[i * ds] = alpha * s[i * ss];
      }
      return;
    }
    for (std::int64_t i = lo[d]; i < hi[d]; ++i) run(level + 1, src_off + i * ss, dst_off + i * ds);
  }
};

}  // namespace

void run_transpose_nest(const loops::LoopNest& nest, std::span<const double> src, std::span<double> dst,
                        bool accumulate, int workers) {
  const auto* body = std::get_if<loops::TransposeBody>(&nest.body);
  if (body == nullptr) throw Error(ErrorKind::Internal, "run_transpose_nest expects a transpose nest");
  const auto count = static_cast<std::size_t>(volume(body->src_extents));
  if (src.size() != count || dst.size() != count) {
    throw Error(ErrorKind::ShapeMismatch, "transpose buffers do not match the nest extents");
  }
  const std::size_t rank = body->src_extents.size();
  auto make_runner = [&] {
    return NestRunner{nest, *body, src.data(), dst.data(), accumulate, std::vector<std::int64_t>(rank, 0),
                      body->src_extents};
  };
  if (nest.loops.empty()) {
    auto r = make_runner();
    r.run(0, 0, 0);
    return;
  }
  // Split the outermost loop's iterations; each worker owns a disjoint range
  // of that loop's dimension, so writes never overlap.
  const auto& outer = nest.loops.front();
  const auto d = static_cast<std::size_t>(outer.dim);
  const std::int64_t trips = ceil_div(body->src_extents[d], outer.step);
  parallel_chunks(trips, workers, [&](std::int64_t t0, std::int64_t t1) {
    auto r = make_runner();
    r.lo[d] = t0 * outer.step;
    r.hi[d] = std::min(t1 * outer.step, body->src_extents[d]);
    if (r.lo[d] < r.hi[d]) r.run(0, 0, 0);
  });
}

namespace {

loops::LoopNest transpose_nest(const DenseTensor& src, std::span<const int> perm, double alpha,
                               const loops::TilingConfig& cfg, TransposeStrategy strategy) {
  if (perm.size() != src.rank()) throw Error(ErrorKind::ShapeMismatch, "permutation rank does not match tensor");
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= perm.size() || seen[static_cast<std::size_t>(p)]) {
      throw Error(ErrorKind::ShapeMismatch, "invalid permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  if (strategy == TransposeStrategy::Naive) {
    std::vector<int> order(perm.size());
    std::iota(order.begin(), order.end(), 0);
    return loops::make_transpose_nest(src.extents(), perm, alpha, order);
  }
  return loops::tile_transpose(loops::make_transpose_nest(src.extents(), perm, alpha), cfg);
}

std::vector<std::int64_t> permuted_extents(const DenseTensor& src, std::span<const int> perm) {
  std::vector<std::int64_t> out;
  for (int p : perm) out.push_back(src.extents().at(static_cast<std::size_t>(p)));
  return out;
}

}  // namespace

DenseTensor permute(const DenseTensor& src, std::span<const int> perm, double alpha, const loops::TilingConfig& cfg,
                    TransposeStrategy strategy, int workers) {
  const auto nest = transpose_nest(src, perm, alpha, cfg, strategy);
  DenseTensor dst(permuted_extents(src, perm));
  run_transpose_nest(nest, src.data(), dst.data(), false, workers);
  return dst;
}

void permute_into(const DenseTensor& src, std::span<const int> perm, double alpha, DenseTensor& dst, bool accumulate,
                  const loops::TilingConfig& cfg, TransposeStrategy strategy, int workers) {
  const auto nest = transpose_nest(src, perm, alpha, cfg, strategy);
  check_shape(dst, permuted_extents(src, perm), "permute destination");
  run_transpose_nest(nest, src.data(), dst.data(), accumulate, workers);
}

// ---------------------------------------------------------------------------
// GEMM

void naive_gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::int64_t m,
                std::int64_t n, std::int64_t k, bool accumulate) {
  if (static_cast<std::int64_t>(a.size()) != m * k || static_cast<std::int64_t>(b.size()) != k * n ||
      static_cast<std::int64_t>(c.size()) != m * n) {
    throw Error(ErrorKind::ShapeMismatch, "GEMM buffer sizes do not match m, n, k");
  }
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += a[static_cast<std::size_t>(i * k + p)] * b[static_cast<std::size_t>(p * n + j)];
      auto& cij = c[static_cast<std::size_t>(i * n + j)];
      cij = accumulate ? cij + s : s;
    }
  }
}

std::int64_t tiled_gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::int64_t m,
                        std::int64_t n, std::int64_t k, const loops::TilingConfig& cfg, const MicroKernel& mk,
                        bool accumulate, int workers) {
  loops::check_tiling(cfg);
  if (m < 1 || n < 1 || k < 1) throw Error(ErrorKind::ShapeMismatch, "GEMM dimensions must be >= 1");
  if (static_cast<std::int64_t>(a.size()) != m * k || static_cast<std::int64_t>(b.size()) != k * n ||
      static_cast<std::int64_t>(c.size()) != m * n) {
    throw Error(ErrorKind::ShapeMismatch, "GEMM buffer sizes do not match m, n, k");
  }
  if (mk.mr() != cfg.mr || mk.nr() != cfg.nr) {
    throw Error(ErrorKind::InvalidConfig, "micro-kernel block does not match mr/nr of the tiling config");
  }
  const std::int64_t mr = cfg.mr, nr = cfg.nr;
  const std::int64_t kc_max = std::min(cfg.kc, k);
  std::vector<double> packed_b(static_cast<std::size_t>(ceil_div(std::min(cfg.nc, n), nr) * nr * kc_max));
  const std::int64_t a_panel = ceil_div(std::min(cfg.mc, m), mr) * mr * kc_max;
  std::int64_t calls = 0;

  for (std::int64_t jc = 0; jc < n; jc += cfg.nc) {
    const std::int64_t nb = std::min(cfg.nc, n - jc);
    for (std::int64_t pc = 0; pc < k; pc += cfg.kc) {
      const std::int64_t kb = std::min(cfg.kc, k - pc);
      const bool acc = accumulate || pc > 0;

      // Pack B-panel kb x nb into Nr-wide slivers, zero-padded.
      for (std::int64_t jr = 0; jr < nb; jr += nr) {
        double* dst = packed_b.data() + (jr / nr) * kb * nr;
        const std::int64_t cols = std::min(nr, nb - jr);
        for (std::int64_t p = 0; p < kb; ++p) {
          const double* row = b.data() + (pc + p) * n + jc + jr;
          for (std::int64_t j = 0; j < cols; ++j) dst[p * nr + j] = row[j];
          for (std::int64_t j = cols; j < nr; ++j) dst[p * nr + j] = 0.0;
        }
      }

      const std::int64_t m_blocks = ceil_div(m, cfg.mc);
      parallel_chunks(m_blocks, workers, [&](std::int64_t b0, std::int64_t b1) {
        std::vector<double> packed_a(static_cast<std::size_t>(a_panel));
        for (std::int64_t blk = b0; blk < b1; ++blk) {
          const std::int64_t ic = blk * cfg.mc;
          const std::int64_t mb = std::min(cfg.mc, m - ic);
          // Pack A-panel mb x kb into Mr-tall slivers, zero-padded.
          for (std::int64_t ir = 0; ir < mb; ir += mr) {
            double* dst = packed_a.data() + (ir / mr) * kb * mr;
            const std::int64_t rows = std::min(mr, mb - ir);
            for (std::int64_t p = 0; p < kb; ++p) {
              for (std::int64_t i = 0; i < rows; ++i) dst[p * mr + i] = a[static_cast<std::size_t>((ic + ir + i) * k + pc + p)];
              for (std::int64_t i = rows; i < mr; ++i) dst[p * mr + i] = 0.0;
            }
          }
          for (std::int64_t jr = 0; jr < nb; jr += nr) {
            const double* bp = packed_b.data() + (jr / nr) * kb * nr;
            for (std::int64_t ir = 0; ir < mb; ir += mr) {
              const double* ap = packed_a.data() + (ir / mr) * kb * mr;
              double* cp = c.data() + (ic + ir) * n + jc + jr;
              mk.compute(ap, bp, cp, n, kb, std::min(mr, mb - ir), std::min(nr, nb - jr), acc);
            }
          }
        }
      });
      calls += ceil_div(nb, nr) * [&] {
        std::int64_t s = 0;
        for (std::int64_t ic = 0; ic < m; ic += cfg.mc) s += ceil_div(std::min(cfg.mc, m - ic), mr);
        return s;
      }();
    }
  }
  return calls;
}

// ---------------------------------------------------------------------------
// TTGT

TTGTResult execute_ttgt(const planner::TTGTPlan& plan, const ir::ContractionSpec& spec, const DenseTensor& a,
                        const DenseTensor& b, const DenseTensor* c_in, const loops::TilingConfig& cfg,
                        const MicroKernel& mk, const ExecOptions& options) {
  const auto start = Clock::now();
  check_shape(a, spec.extents_of(spec.a_labels), "A");
  check_shape(b, spec.extents_of(spec.b_labels), "B");
  const auto out_extents = spec.extents_of(spec.out_labels);
  const bool accumulate = spec.accumulate != ir::Accumulate::Overwrite;
  if (accumulate) {
    if (c_in == nullptr) throw Error(ErrorKind::ShapeMismatch, "accumulating contraction needs C_in");
    check_shape(*c_in, out_extents, "C_in");
  }
  const double alpha = spec.accumulate == ir::Accumulate::Subtract ? -spec.alpha : spec.alpha;

  ExecutionReport report;
  report.flops = ir::flop_count(spec);

  // Alpha rides on the first permute that runs anyway.
  enum class Site { A, B, C, Scale };
  const Site site = !plan.skip_a ? Site::A : !plan.skip_b ? Site::B : !plan.skip_c ? Site::C : Site::Scale;

  auto timed_permute = [&](const DenseTensor& src, const planner::Permutation& perm, double s, const char* stage) {
    const auto t0 = Clock::now();
    DenseTensor out = permute(src, perm, s, cfg, options.transpose, options.workers);
    report.per_stage[stage] += seconds_since(t0);
    return out;
  };

  std::optional<DenseTensor> a_store, b_store;
  const DenseTensor* ap = &a;
  const DenseTensor* bp = &b;
  if (!plan.skip_a) ap = &a_store.emplace(timed_permute(a, plan.perm_a, site == Site::A ? alpha : 1.0, "transpose_a"));
  if (!plan.skip_b) bp = &b_store.emplace(timed_permute(b, plan.perm_b, site == Site::B ? alpha : 1.0, "transpose_b"));
  if (site == Site::Scale && alpha != 1.0) {
    const auto t0 = Clock::now();
    const bool scale_a = a.size() <= b.size();
    auto& store = scale_a ? a_store : b_store;
    store.emplace(scale_a ? a : b);
    for (double& v : store->data()) v *= alpha;
    (scale_a ? ap : bp) = &*store;
    report.per_stage["scale"] += seconds_since(t0);
  }

  const DenseTensor& x = plan.swap_operands ? *bp : *ap;
  const DenseTensor& y = plan.swap_operands ? *ap : *bp;

  auto gemm = [&](std::span<double> c, bool acc) {
    const auto t0 = Clock::now();
    if (options.gemm == GemmStrategy::Tiled) {
      report.microkernel_calls += tiled_gemm(x.data(), y.data(), c, plan.m, plan.n, plan.k, cfg, mk, acc,
                                             options.workers);
    } else {
      naive_gemm(x.data(), y.data(), c, plan.m, plan.n, plan.k, acc);
    }
    report.per_stage["gemm"] += seconds_since(t0);
  };

  DenseTensor c = accumulate ? *c_in : DenseTensor(out_extents);
  if (plan.skip_c) {
    gemm(c.data(), accumulate);
  } else {
    std::vector<std::int64_t> cp_extents = spec.extents_of(plan.m_group);
    for (auto e : spec.extents_of(plan.n_group)) cp_extents.push_back(e);
    DenseTensor cp(cp_extents);
    gemm(cp.data(), false);
    const auto t0 = Clock::now();
    permute_into(cp, plan.perm_c, site == Site::C ? alpha : 1.0, c, accumulate, cfg, options.transpose,
                 options.workers);
    report.per_stage["transpose_c"] += seconds_since(t0);
  }

  report.wall_time = seconds_since(start);
  report.gflops = report.wall_time > 0 ? static_cast<double>(report.flops) / report.wall_time / 1e9 : 0.0;
  return TTGTResult{std::move(c), std::move(report)};
}

double relative_error(const DenseTensor& got, const DenseTensor& ref, double alpha, const DenseTensor& a,
                      const DenseTensor& b) {
  const double scale = std::max(max_abs(ref), std::abs(alpha) * max_abs(a) * max_abs(b));
  const double diff = max_abs_diff(got, ref);
  if (scale == 0.0) return diff;
  return diff / scale;
}

// ---------------------------------------------------------------------------
// Programs

Initializer random_initializer(std::uint64_t seed) {
  return [seed](const std::string& name, const std::vector<std::int64_t>& extents) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return DenseTensor::random(extents, seed ^ h);
  };
}

Initializer const_initializer(double value) {
  return [value](const std::string&, const std::vector<std::int64_t>& extents) { return DenseTensor(extents, value); };
}

namespace {

std::string ref_text(const ir::Module& m, const ir::IrLabeledTensor& ref) {
  std::string s = m.tensor(ref.tensor).name + "[";
  const auto names = m.label_names(ref);
  for (std::size_t i = 0; i < names.size(); ++i) s += (i ? "," : "") + names[i];
  return s + "]";
}

std::string_view assign_text(ir::Accumulate mode) {
  switch (mode) {
    case ir::Accumulate::Overwrite: return "=";
    case ir::Accumulate::Add: return "+=";
    case ir::Accumulate::Subtract: return "-=";
  }
  return "=";
}

std::string step_text(const planner::ContractionStep& s) {
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
  };
  return s.out_name + "[" + join(s.spec.out_labels) + "] " + std::string(assign_text(s.spec.accumulate)) + " " +
         s.a_name + "[" + join(s.spec.a_labels) + "] * " + s.b_name + "[" + join(s.spec.b_labels) + "]";
}

class ProgramRunner {
public:
  ProgramRunner(const ir::Module& module, std::map<std::string, DenseTensor> inputs, const loops::TilingConfig& cfg,
                const MicroKernel& mk, const ProgramOptions& options)
      : m_(module), store_(std::move(inputs)), cfg_(cfg), mk_(mk), opt_(options) {
    for (const auto& [name, t] : store_) {
      const auto id = m_.find_tensor(name);
      if (!id) throw Error(ErrorKind::UndeclaredIdentifier, "input '" + name + "' is not a declared tensor");
      if (t.extents() != m_.declared_extents(*id)) {
        throw Error(ErrorKind::ShapeMismatch, "input '" + name + "' does not match the declared shape");
      }
    }
  }

  ProgramResult run() {
    for (const auto& op : m_.ops) {
      std::visit([&](const auto& kind) { exec(op, kind); }, op.kind);
    }
    return ProgramResult{std::move(store_), std::move(steps_)};
  }

private:
  const ir::Module& m_;
  std::map<std::string, DenseTensor> store_;
  const loops::TilingConfig& cfg_;
  const MicroKernel& mk_;
  const ProgramOptions& opt_;
  std::vector<StepReport> steps_;

  DenseTensor& storage(ir::TensorId id, bool for_read) {
    const auto& decl = m_.tensor(id);
    auto it = store_.find(decl.name);
    if (it != store_.end()) return it->second;
    if (for_read) {
      if (!opt_.initializer) {
        throw Error(ErrorKind::UninitializedTensor, "tensor '" + decl.name + "' is read before being written");
      }
      DenseTensor t = opt_.initializer(decl.name, m_.declared_extents(id));
      if (t.extents() != m_.declared_extents(id)) {
        throw Error(ErrorKind::ShapeMismatch, "initializer produced the wrong shape for '" + decl.name + "'");
      }
      return store_.emplace(decl.name, std::move(t)).first->second;
    }
    return store_.emplace(decl.name, DenseTensor(m_.declared_extents(id))).first->second;
  }

  /// Element offsets of a (possibly sliced) reference, per dimension.
  std::vector<std::vector<std::int64_t>> slice_offsets(const ir::IrLabeledTensor& ref, const DenseTensor& t) const {
    const auto& decl = m_.tensor(ref.tensor);
    std::vector<std::vector<std::int64_t>> offs(ref.labels.size());
    for (std::size_t d = 0; d < ref.labels.size(); ++d) {
      const auto& used = m_.label(ref.labels[d]).range;
      const auto& declared = m_.label(decl.dims[d]).range;
      for (std::int64_t i = 0; i < used.extent(); ++i) {
        const std::int64_t pos = (used.begin + i * used.increment - declared.begin) / declared.increment;
        offs[d].push_back(pos * t.strides()[d]);
      }
    }
    return offs;
  }

  template <typename Fn>
  static void walk(const std::vector<std::vector<std::int64_t>>& offs, Fn&& fn) {
    std::int64_t flat = 0;
    auto rec = [&](auto&& self, std::size_t d, std::int64_t off) -> void {
      if (d == offs.size()) {
        fn(flat++, off);
        return;
      }
      for (auto o : offs[d]) self(self, d + 1, off + o);
    };
    rec(rec, 0, 0);
  }

  /// The values of `ref`, copying only when it is a slice.
  const DenseTensor& read(const ir::IrLabeledTensor& ref, DenseTensor& scratch) {
    DenseTensor& t = storage(ref.tensor, true);
    if (!m_.is_slice(ref)) return t;
    std::vector<std::int64_t> ext;
    for (auto l : ref.labels) ext.push_back(m_.label(l).range.extent());
    scratch = DenseTensor(ext);
    walk(slice_offsets(ref, t), [&](std::int64_t i, std::int64_t off) {
      scratch.data()[static_cast<std::size_t>(i)] = t.data()[static_cast<std::size_t>(off)];
    });
    return scratch;
  }

  void write(const ir::IrLabeledTensor& ref, DenseTensor value) {
    if (!m_.is_slice(ref)) {
      store_[m_.tensor(ref.tensor).name] = std::move(value);
      return;
    }
    DenseTensor& t = storage(ref.tensor, false);
    walk(slice_offsets(ref, t), [&](std::int64_t i, std::int64_t off) {
      t.data()[static_cast<std::size_t>(off)] = value.data()[static_cast<std::size_t>(i)];
    });
  }

  std::vector<std::int64_t> ref_extents(const ir::IrLabeledTensor& ref) const {
    std::vector<std::int64_t> ext;
    for (auto l : ref.labels) ext.push_back(m_.label(l).range.extent());
    return ext;
  }

  void exec(const ir::IrOp& op, const ir::Fill& fill) {
    const auto t0 = Clock::now();
    DenseTensor value(ref_extents(op.dest), fill.value);
    if (op.accumulate != ir::Accumulate::Overwrite) {
      DenseTensor scratch;
      const DenseTensor& cur = read(op.dest, scratch);
      const double sign = op.accumulate == ir::Accumulate::Subtract ? -1.0 : 1.0;
      for (std::size_t i = 0; i < value.size(); ++i) value.data()[i] = cur.data()[i] + sign * fill.value;
    }
    write(op.dest, std::move(value));
    record(ref_text(m_, op.dest) + " " + std::string(assign_text(op.accumulate)) + " fill", t0, 0);
  }

  void exec(const ir::IrOp& op, const ir::Copy& copy) {
    const auto t0 = Clock::now();
    const auto dst_names = m_.label_names(op.dest);
    const auto src_names = m_.label_names(copy.src);
    planner::Permutation perm;
    for (const auto& n : dst_names) {
      perm.push_back(static_cast<int>(std::find(src_names.begin(), src_names.end(), n) - src_names.begin()));
    }
    DenseTensor src_scratch;
    const DenseTensor& src = read(copy.src, src_scratch);
    const double alpha = op.accumulate == ir::Accumulate::Subtract ? -copy.alpha : copy.alpha;
    DenseTensor value;
    if (op.accumulate == ir::Accumulate::Overwrite) {
      value = permute(src, perm, alpha, cfg_, opt_.exec.transpose, opt_.exec.workers);
    } else {
      DenseTensor scratch;
      value = read(op.dest, scratch);
      permute_into(src, perm, alpha, value, true, cfg_, opt_.exec.transpose, opt_.exec.workers);
    }
    write(op.dest, std::move(value));
    record(ref_text(m_, op.dest) + " " + std::string(assign_text(op.accumulate)) + " " + ref_text(m_, copy.src), t0,
           0);
  }

  DenseTensor contract(const ir::ContractionSpec& spec, const DenseTensor& a, const DenseTensor& b,
                       const DenseTensor* c_in, const std::string& text) {
    if (opt_.naive_oracle) {
      const auto t0 = Clock::now();
      DenseTensor c = naive_contract(spec, a, b, c_in);
      record(text, t0, ir::flop_count(spec));
      return c;
    }
    const planner::TTGTPlan plan =
        opt_.plan == PlanChoice::Best ? planner::select_ttgt(spec) : planner::enumerate_ttgt_variants(spec).front();
    auto result = execute_ttgt(plan, spec, a, b, c_in, cfg_, mk_, opt_.exec);
    steps_.push_back(StepReport{text, plan, result.report});
    return std::move(result.tensor);
  }

  void exec(const ir::IrOp& op, const ir::TensorContract& tc) {
    const auto spec = ir::contraction_spec(m_, op);
    DenseTensor sa, sb, sc;
    const DenseTensor& a = read(tc.lhs_in, sa);
    const DenseTensor& b = read(tc.rhs_in, sb);
    const DenseTensor* c_in = op.accumulate != ir::Accumulate::Overwrite ? &read(op.dest, sc) : nullptr;
    const std::string text = ref_text(m_, op.dest) + " " + std::string(assign_text(op.accumulate)) + " " +
                             ref_text(m_, tc.lhs_in) + " * " + ref_text(m_, tc.rhs_in);
    write(op.dest, contract(spec, a, b, c_in, text));
  }

  void exec(const ir::IrOp&, const ir::MultOp&) {}  // evaluated by its Set

  void exec(const ir::IrOp& op, const ir::Set& set) {
    const ir::IrOp& mult_op = m_.op(set.source);
    const auto& mult = std::get<ir::MultOp>(mult_op.kind);
    std::vector<planner::ContractionStep> steps;
    if (opt_.naive_oracle) {
      const auto operands = planner::mult_operands(m_, mult_op);
      const auto extents = planner::mult_extents(m_, mult_op);
      const auto out_labels = m_.label_names(op.dest);
      steps = planner::binarize(planner::left_deep_tree(operands, out_labels, extents), operands,
                                m_.tensor(op.dest.tensor).name, out_labels, extents, mult.alpha, op.accumulate);
    } else {
      steps = planner::binarize(m_, op);
    }

    std::vector<DenseTensor> operands;
    for (const auto& ref : mult.operands) {
      DenseTensor scratch;
      operands.push_back(read(ref, scratch));
    }
    std::map<std::string, DenseTensor> temps;
    auto fetch = [&](int operand, const std::string& name) -> DenseTensor {
      if (operand >= 0) return operands[static_cast<std::size_t>(operand)];
      auto node = temps.extract(name);  // each temp is consumed exactly once
      if (node.empty()) throw Error(ErrorKind::Internal, "missing intermediate '" + name + "'");
      return std::move(node.mapped());
    };
    for (const auto& step : steps) {
      const DenseTensor a = fetch(step.a_operand, step.a_name);
      const DenseTensor b = fetch(step.b_operand, step.b_name);
      if (step.out_is_temp) {
        temps[step.out_name] = contract(step.spec, a, b, nullptr, step_text(step));
        continue;
      }
      DenseTensor sc;
      const DenseTensor* c_in = op.accumulate != ir::Accumulate::Overwrite ? &read(op.dest, sc) : nullptr;
      write(op.dest, contract(step.spec, a, b, c_in, step_text(step)));
    }
  }

  void record(const std::string& text, Clock::time_point t0, std::int64_t flops) {
    ExecutionReport r;
    r.wall_time = seconds_since(t0);
    r.flops = flops;
    r.gflops = r.wall_time > 0 ? static_cast<double>(flops) / r.wall_time / 1e9 : 0.0;
    steps_.push_back(StepReport{text, std::nullopt, r});
  }
};

}  // namespace

ProgramResult run_program(const ir::Module& module, std::map<std::string, DenseTensor> inputs,
                          const loops::TilingConfig& cfg, const MicroKernel& mk, const ProgramOptions& options) {
  return ProgramRunner(module, std::move(inputs), cfg, mk, options).run();
}

}  // namespace tacc::exec
