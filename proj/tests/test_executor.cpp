#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tacc/executor.hpp"
#include "tacc/frontend.hpp"

using namespace tacc;
using namespace tacc::exec;

namespace {

ir::ContractionSpec four_index_spec(const std::map<std::string, std::int64_t>& ext, double alpha = 1.0,
                                  ir::Accumulate mode = ir::Accumulate::Overwrite) {
  return ir::spec_from_einsum("abcd-aebf-dfce", ext, alpha, mode);
}

DenseTensor rand_for(const ir::ContractionSpec& spec, const std::vector<std::string>& labels, std::uint64_t seed) {
  return DenseTensor::random(spec.extents_of(labels), seed);
}

bool bitwise_equal(std::span<const double> x, std::span<const double> y) {
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

ir::Module compile(std::string_view src) { return ir::lower_ast(frontend::parse_source(src)); }

}  // namespace

TEST_CASE("naive contraction of a 2x2 matmul") {
  const auto spec = ir::spec_from_einsum("ik-ij-jk", {{"i", 2}, {"j", 2}, {"k", 2}});
  const DenseTensor a({2, 2}, {1, 2, 3, 4});
  const DenseTensor b({2, 2}, {5, 6, 7, 8});
  const auto c = naive_contract(spec, a, b);
  CHECK(c == DenseTensor({2, 2}, {19, 22, 43, 50}));
}

TEST_CASE("naive contraction of abcd-aebf-dfce with ones") {
  std::map<std::string, std::int64_t> ext;
  for (char ch : std::string("abcdef")) ext[std::string(1, ch)] = 2;
  const auto spec = four_index_spec(ext);
  const auto c = naive_contract(spec, DenseTensor({2, 2, 2, 2}, 1.0), DenseTensor({2, 2, 2, 2}, 1.0));
  for (double v : c.data()) CHECK(v == 4.0);
}

TEST_CASE("alpha = 0 leaves beta * C_in") {
  const auto spec = ir::spec_from_einsum("ik-ij-jk", {{"i", 2}, {"j", 3}, {"k", 2}}, 0.0, ir::Accumulate::Add);
  const DenseTensor c_in({2, 2}, {1, -2, 3, -4});
  const auto c = naive_contract(spec, DenseTensor::random({2, 3}, 1), DenseTensor::random({3, 2}, 2), &c_in);
  CHECK(c == c_in);
}

TEST_CASE("naive contraction matches the einsum oracle for every accumulate mode") {
  const std::map<std::string, std::int64_t> ext{{"a", 2}, {"b", 3}, {"c", 2}, {"d", 3}, {"e", 2}, {"f", 3}};
  for (auto mode : {ir::Accumulate::Overwrite, ir::Accumulate::Add, ir::Accumulate::Subtract}) {
    const auto spec = four_index_spec(ext, 1.5, mode);
    const auto a = rand_for(spec, spec.a_labels, 3), b = rand_for(spec, spec.b_labels, 4);
    const auto c_in = rand_for(spec, spec.out_labels, 5);
    CHECK(max_abs_diff(naive_contract(spec, a, b, &c_in), oracle::einsum(spec, a, b, &c_in)) < 1e-13);
  }
}

TEST_CASE("shape mismatches are rejected") {
  const auto spec = ir::spec_from_einsum("ik-ij-jk", {{"i", 2}, {"j", 2}, {"k", 2}});
  CHECK_THROWS_AS(naive_contract(spec, DenseTensor({2, 3}), DenseTensor({2, 2})), Error);
}

TEST_CASE("permute examples") {
  const DenseTensor x({2, 2}, {1, 2, 3, 4});
  const std::vector<int> id{0, 1}, swap{1, 0};
  CHECK(bitwise_equal(permute(x, id).data(), x.data()));
  CHECK(permute(x, swap) == DenseTensor({2, 2}, {1, 3, 2, 4}));

  // A[a,e,b,f] -> TA[a,b,e,f]
  const auto a = DenseTensor::random({2, 3, 4, 5}, 9);
  const std::vector<int> perm{0, 2, 1, 3};
  const auto ta = permute(a, perm);
  CHECK(ta.extents() == std::vector<std::int64_t>{2, 4, 3, 5});
  for (std::int64_t i0 = 0; i0 < 2; ++i0)
    for (std::int64_t e = 0; e < 3; ++e)
      for (std::int64_t b = 0; b < 4; ++b)
        for (std::int64_t f = 0; f < 5; ++f) {
          const std::vector<std::int64_t> src{i0, e, b, f}, dst{i0, b, e, f};
          CHECK(ta.at(dst) == a.at(src));
        }
}

TEST_CASE("permute round trips through the inverse") {
  const auto x = DenseTensor::random({3, 40, 5, 37}, 11);
  const std::vector<int> perm{3, 1, 0, 2};
  const auto back = permute(permute(x, perm), planner::inverse(perm));
  CHECK(back == x);
}

TEST_CASE("tiled and untiled transposes agree bitwise; workers too") {
  const auto x = DenseTensor::random({70, 33, 65}, 12);
  const std::vector<int> perm{2, 0, 1};
  loops::TilingConfig small;
  small.transpose_tile = 8;
  const auto naive = permute(x, perm, 0.5, {}, TransposeStrategy::Naive);
  CHECK(permute(x, perm, 0.5, small) == naive);
  CHECK(permute(x, perm, 0.5, small, TransposeStrategy::Optimized, 4) == naive);
}

TEST_CASE("tiled GEMM agrees with the triple loop") {
  const auto mk = reference_microkernel();
  loops::TilingConfig cfg;
  cfg.mc = 16;
  cfg.nc = 24;
  cfg.kc = 16;
  for (auto [m, n, k] : {std::tuple{64, 64, 64}, std::tuple{5, 9, 3}, std::tuple{1, 1, 1}, std::tuple{33, 17, 50}}) {
    const auto a = DenseTensor::random({m, k}, 21), b = DenseTensor::random({k, n}, 22);
    const auto ref = oracle::gemm({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, m, n, k);
    std::vector<double> c(static_cast<std::size_t>(m * n), 7.0);
    const auto calls = tiled_gemm(a.data(), b.data(), c, m, n, k, cfg, *mk, false);
    CHECK(calls == loops::micro_call_count(m, n, k, cfg));
    double diff = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) diff = std::max(diff, std::abs(c[i] - ref[i]));
    CHECK(diff <= 1e-12 * k * max_abs(a) * max_abs(b));
  }
}

TEST_CASE("tiled GEMM accumulate adds to the existing C") {
  const auto mk = reference_microkernel();
  const std::int64_t m = 13, n = 11, k = 7;
  const auto a = DenseTensor::random({m, k}, 31), b = DenseTensor::random({k, n}, 32), pre = DenseTensor::random({m, n}, 33);
  const auto prod = oracle::gemm({a.data().begin(), a.data().end()}, {b.data().begin(), b.data().end()}, m, n, k);
  std::vector<double> c(pre.data().begin(), pre.data().end());
  tiled_gemm(a.data(), b.data(), c, m, n, k, loops::TilingConfig{}, *mk, true);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(pre.data()[i] + prod[i]).epsilon(1e-12));
}

TEST_CASE("workers do not change GEMM results") {
  const auto mk = reference_microkernel();
  loops::TilingConfig cfg;
  cfg.mc = 8;
  const std::int64_t m = 67, n = 45, k = 300;
  const auto a = DenseTensor::random({m, k}, 41), b = DenseTensor::random({k, n}, 42);
  std::vector<double> serial(static_cast<std::size_t>(m * n)), parallel(serial.size());
  tiled_gemm(a.data(), b.data(), serial, m, n, k, cfg, *mk, false, 1);
  tiled_gemm(a.data(), b.data(), parallel, m, n, k, cfg, *mk, false, 4);
  CHECK(bitwise_equal(serial, parallel));
}

TEST_CASE("micro-kernel examples") {
  ReferenceMicroKernel ref;
  ScalarMicroKernel scalar;
  CHECK(ref.mr() == 4);
  CHECK(ref.nr() == 8);
  std::vector<double> ones_a(4, 1.0), ones_b(8, 1.0), c(32, -3.0);
  ref.compute(ones_a.data(), ones_b.data(), c.data(), 8, 1, 4, 8, false);
  for (double v : c) CHECK(v == 1.0);

  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto [mr, nr] : {std::pair{4, 8}, std::pair{8, 4}, std::pair{4, 4}, std::pair{3, 5}}) {
    ReferenceMicroKernel r(mr, nr);
    ScalarMicroKernel s(mr, nr);
    const std::int64_t kc = 37;
    std::vector<double> a(static_cast<std::size_t>(mr * kc)), b(static_cast<std::size_t>(nr * kc));
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    for (bool acc : {false, true}) {
      for (auto [rows, cols] : {std::pair{mr, nr}, std::pair{1, nr}, std::pair{mr - 1, 2}}) {
        std::vector<double> c1(static_cast<std::size_t>(mr * nr), 0.25), c2 = c1;
        r.compute(a.data(), b.data(), c1.data(), nr, kc, rows, cols, acc);
        s.compute(a.data(), b.data(), c2.data(), nr, kc, rows, cols, acc);
        CHECK(bitwise_equal(c1, c2));
      }
    }
  }
}

TEST_CASE("accumulating two kc halves equals one full call") {
  // Small integers keep every partial sum exact.
  ReferenceMicroKernel r;
  const std::int64_t kc = 16, half = 8;
  std::vector<double> a(4 * kc), b(8 * kc);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(static_cast<int>(i % 7) - 3);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<double>(static_cast<int>(i % 5) - 2);
  std::vector<double> full(32), split(32);
  r.compute(a.data(), b.data(), full.data(), 8, kc, 4, 8, false);
  r.compute(a.data(), b.data(), split.data(), 8, half, 4, 8, false);
  r.compute(a.data() + 4 * half, b.data() + 8 * half, split.data(), 8, half, 4, 8, true);
  CHECK(bitwise_equal(full, split));
}

TEST_CASE("kernel shape must match the tiling") {
  loops::TilingConfig cfg;
  ReferenceMicroKernel odd(8, 4);
  std::vector<double> a(4), b(4), c(4);
  CHECK_THROWS_AS(tiled_gemm(a, b, c, 2, 2, 1, cfg, odd, false), Error);
}

TEST_CASE("matmul TTGT runs only the GEMM stage") {
  const auto spec = ir::spec_from_einsum("ik-ij-jk", {{"i", 6}, {"j", 5}, {"k", 7}});
  const auto a = rand_for(spec, spec.a_labels, 61), b = rand_for(spec, spec.b_labels, 62);
  const auto mk = reference_microkernel();
  const auto r = execute_ttgt(planner::select_ttgt(spec), spec, a, b, nullptr, {}, *mk);
  CHECK(r.report.per_stage.size() == 1);
  CHECK(r.report.per_stage.count("gemm") == 1);
  CHECK(r.report.flops == 2 * 6 * 5 * 7);
  CHECK(relative_error(r.tensor, naive_contract(spec, a, b), 1.0, a, b) <= 1e-12 * 5);
}

TEST_CASE("every abcd-aebf-dfce plan matches the naive oracle") {
  std::mt19937 rng(71);
  std::uniform_int_distribution<std::int64_t> dist(2, 6);
  const auto mk = reference_microkernel();
  for (int trial = 0; trial < 3; ++trial) {
    std::map<std::string, std::int64_t> ext;
    for (char ch : std::string("abcdef")) ext[std::string(1, ch)] = dist(rng);
    for (auto mode : {ir::Accumulate::Overwrite, ir::Accumulate::Add, ir::Accumulate::Subtract}) {
      const auto spec = four_index_spec(ext, 0.75, mode);
      const auto a = rand_for(spec, spec.a_labels, 72), b = rand_for(spec, spec.b_labels, 73);
      const auto c_in = rand_for(spec, spec.out_labels, 74);
      const auto ref = naive_contract(spec, a, b, &c_in);
      const auto plans = planner::enumerate_ttgt_variants(spec);
      REQUIRE(plans.size() == 16);
      for (const auto& p : plans) {
        const auto r = execute_ttgt(p, spec, a, b, &c_in, {}, *mk);
        CHECK(relative_error(r.tensor, ref, 0.75, a, b) <= 1e-12 * static_cast<double>(p.k));
      }
    }
  }
}

TEST_CASE("naive strategies give the same answer") {
  std::map<std::string, std::int64_t> ext{{"a", 3}, {"b", 4}, {"c", 5}, {"d", 2}, {"e", 3}, {"f", 4}};
  const auto spec = four_index_spec(ext);
  const auto a = rand_for(spec, spec.a_labels, 81), b = rand_for(spec, spec.b_labels, 82);
  const auto mk = reference_microkernel();
  const auto plan = planner::select_ttgt(spec);
  const auto fast = execute_ttgt(plan, spec, a, b, nullptr, {}, *mk);
  const auto slow = execute_ttgt(plan, spec, a, b, nullptr, {}, *mk, {TransposeStrategy::Naive, GemmStrategy::Naive, 1});
  CHECK(relative_error(fast.tensor, slow.tensor, 1.0, a, b) <= 1e-12 * 12);
  CHECK(slow.report.microkernel_calls == 0);
  CHECK(fast.report.microkernel_calls > 0);
}

TEST_CASE("run_program: constant contraction closed form") {
  const auto m = compile(
      "IndexLabel [a,b,c,d,e,f] = [2];\n"
      "Tensor<double> A([a,e,b,f]);\nTensor<double> B([d,f,c,e]);\nTensor<double> C([a,b,c,d]);\n"
      "A[a,e,b,f] = 1.5;\nB[d,f,c,e] = -2.0;\n"
      "C[a,b,c,d] = A[a,e,b,f] * B[d,f,c,e];\n");
  const auto mk = reference_microkernel();
  const auto r = run_program(m, {}, {}, *mk);
  for (double v : r.tensors.at("C").data()) CHECK(v == 4 * 1.5 * -2.0);
}

TEST_CASE("run_program: statements see earlier writes") {
  const auto m = compile(
      "IndexLabel [i,j] = [3];\nTensor<double> A([i,j]);\nTensor<double> B([j,i]);\n"
      "A[i,j] = 2.0;\nB[j,i] = 3.0 * A[i,j];\nA[i,j] = 1.0;\nA[i,j] += B[j,i];\n");
  const auto mk = reference_microkernel();
  const auto r = run_program(m, {}, {}, *mk);
  for (double v : r.tensors.at("B").data()) CHECK(v == 6.0);
  for (double v : r.tensors.at("A").data()) CHECK(v == 7.0);
}

TEST_CASE("run_program: chains and the naive oracle agree") {
  const auto m = compile(
      "IndexLabel [i,l] = [5];\nIndexLabel [j,k] = [4];\n"
      "Tensor<double> A([i,j]);\nTensor<double> B([j,k]);\nTensor<double> C([k,l]);\nTensor<double> D([i,l]);\n"
      "D[i,l] = 0.5 * A[i,j] * B[j,k] * C[k,l];\nD[i,l] -= A[i,j] * B[j,k] * C[k,l];\n");
  const auto mk = reference_microkernel();
  ProgramOptions opt;
  opt.initializer = random_initializer(5);
  const auto fast = run_program(m, {}, {}, *mk, opt);
  opt.naive_oracle = true;
  const auto slow = run_program(m, {}, {}, *mk, opt);
  CHECK(oracle::max_rel(fast.tensors.at("D"), slow.tensors.at("D")) < 1e-12);
  CHECK(fast.tensors.count("t0") == 0);
}

TEST_CASE("run_program: inputs are used and missing values are errors") {
  const auto m = compile(
      "IndexLabel [i,j,k] = [2];\nTensor<double> A([i,j]);\nTensor<double> B([j,k]);\nTensor<double> C([i,k]);\n"
      "C[i,k] = A[i,j] * B[j,k];\n");
  const auto mk = reference_microkernel();
  std::map<std::string, DenseTensor> in{{"A", DenseTensor({2, 2}, {1, 2, 3, 4})}, {"B", DenseTensor({2, 2}, {5, 6, 7, 8})}};
  CHECK(run_program(m, in, {}, *mk).tensors.at("C") == DenseTensor({2, 2}, {19, 22, 43, 50}));
  in.erase("B");
  try {
    run_program(m, in, {}, *mk);
    FAIL("expected UninitializedTensor");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UninitializedTensor);
    CHECK(std::string(e.what()).find("B") != std::string::npos);
  }
}

TEST_CASE("DTNS round trip and corruption") {
  const auto t = DenseTensor::random({3, 1, 4}, 91);
  const auto bytes = encode_dtns(t);
  CHECK(bytes.substr(0, 4) == "DTNS");
  CHECK(bytes.size() == 4 + 4 + 4 + 3 * 8 + 12 * 8);
  CHECK(decode_dtns(bytes) == t);
  CHECK(decode_dtns(encode_dtns(DenseTensor())) == DenseTensor());
  CHECK_THROWS_AS(decode_dtns(bytes.substr(0, bytes.size() - 1)), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_dtns(bad), Error);

  const auto path = std::filesystem::temp_directory_path() / "tacc_roundtrip.dtns";
  write_dtns(path, t);
  CHECK(read_dtns(path) == t);
  std::filesystem::remove(path);
}
