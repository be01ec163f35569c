#include <doctest.h>

#include "tacc/frontend.hpp"
#include "tacc/ir.hpp"

using namespace tacc;
using namespace tacc::ir;

namespace {

Module lower(std::string_view src) { return lower_ast(frontend::parse_source(src)); }

ErrorKind lower_error(std::string_view src) {
  try {
    lower(src);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a lowering error for: " << src);
  return ErrorKind::Internal;
}

const char* kFourIndex =
    "IndexLabel [a,b,c,d,e,f] = [4];\n"
    "Tensor<double> A([a,e,b,f]);\n"
    "Tensor<double> B([d,f,c,e]);\n"
    "Tensor<double> C([a,b,c,d]);\n"
    "C[a,b,c,d] = 1.0 * A[a,e,b,f] * B[d,f,c,e];\n";

}  // namespace

TEST_CASE("classify abcd-aebf-dfce indices") {
  const auto cls = classify_indices({"a", "b", "c", "d"}, {"a", "e", "b", "f"}, {"d", "f", "c", "e"});
  CHECK(cls.free_a == std::vector<std::string>{"a", "b"});
  CHECK(cls.free_b == std::vector<std::string>{"d", "c"});
  CHECK(cls.contracted == std::vector<std::string>{"e", "f"});
}

TEST_CASE("classify matmul and dot product") {
  const auto mm = classify_indices({"i", "k"}, {"i", "j"}, {"j", "k"});
  CHECK(mm.free_a == std::vector<std::string>{"i"});
  CHECK(mm.free_b == std::vector<std::string>{"k"});
  CHECK(mm.contracted == std::vector<std::string>{"j"});
  const auto dot = classify_indices({}, {"i"}, {"i"});
  CHECK(dot.free_a.empty());
  CHECK(dot.free_b.empty());
  CHECK(dot.contracted == std::vector<std::string>{"i"});
}

TEST_CASE("classification rejects invalid index usage") {
  auto kind = [](std::vector<std::string> o, std::vector<std::string> a, std::vector<std::string> b) {
    try {
      classify_indices(o, a, b);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Internal;
  };
  CHECK(kind({"i"}, {"i", "i"}, {"j"}) == ErrorKind::InvalidIndexUsage);       // repeated in an operand
  CHECK(kind({"a"}, {"a", "e"}, {"b", "e"}) == ErrorKind::InvalidIndexUsage);  // b free but not in output
  CHECK(kind({"i", "z"}, {"i", "j"}, {"j"}) == ErrorKind::InvalidIndexUsage);  // z in neither input
  CHECK(kind({"i", "j"}, {"i", "j"}, {"j"}) == ErrorKind::InvalidIndexUsage);  // j in both inputs and output
}

TEST_CASE("flop counts") {
  CHECK(flop_count(spec_from_einsum("ik-ij-jk", {{"i", 2}, {"j", 2}, {"k", 2}})) == 16);
  std::map<std::string, std::int64_t> four;
  for (char ch : std::string("abcdef")) four[std::string(1, ch)] = 4;
  CHECK(flop_count(spec_from_einsum("abcd-aebf-dfce", four)) == 8192);
  CHECK(flop_count(spec_from_einsum("-i-i", {{"i", 10}})) == 20);
  // Invariant under operand swap and label permutation within an operand.
  CHECK(flop_count(spec_from_einsum("abcd-dfce-aebf", four)) == 8192);
  CHECK(flop_count(spec_from_einsum("abcd-eafb-cfde", four)) == 8192);
}

TEST_CASE("flop count overflow is reported") {
  std::map<std::string, std::int64_t> huge;
  for (char ch : std::string("abcdef")) huge[std::string(1, ch)] = 1'000'000;
  CHECK_THROWS_AS(flop_count(spec_from_einsum("abcd-aebf-dfce", huge)), Error);
}

TEST_CASE("einsum strings") {
  const auto s = spec_from_einsum("abcd-aebf-dfce", {{"a", 2}, {"b", 3}, {"c", 4}, {"d", 5}, {"e", 6}, {"f", 7}});
  CHECK(s.out_labels == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(s.b_labels == std::vector<std::string>{"d", "f", "c", "e"});
  CHECK(einsum_string(s) == "abcd-aebf-dfce");
  CHECK_THROWS_AS(spec_from_einsum("ab-a", {{"a", 1}, {"b", 1}}), Error);
  CHECK_THROWS_AS(spec_from_einsum("ab-ac-cb", {{"a", 1}, {"b", 1}}), Error);
}

TEST_CASE("fill lowers to ta.fill") {
  const auto m = lower("IndexLabel [i,j] = [3];\nTensor<double> A([i,j]);\nA[i,j] = 0.0;\n");
  REQUIRE(m.ops.size() == 1);
  CHECK(std::holds_alternative<Fill>(m.ops[0].kind));
  CHECK(std::get<Fill>(m.ops[0].kind).value == 0.0);
  CHECK(validate(m).empty());
}

TEST_CASE("scaled transposed assignment lowers to copy") {
  const auto m = lower(
      "IndexLabel [i,j] = [3];\nTensor<double> A([i,j]);\nTensor<double> B([i,j]);\n"
      "A[i,j] = 1.0;\nB[i,j] = 2.0 * A[j,i];\n");
  REQUIRE(m.ops.size() == 2);
  const auto& copy = std::get<Copy>(m.ops[1].kind);
  CHECK(copy.alpha == 2.0);
  CHECK(m.label_names(copy.src) == std::vector<std::string>{"j", "i"});
  CHECK(print_ta(m).find("perm = (1,0)") != std::string::npos);
}

TEST_CASE("abcd-aebf-dfce lowers to ta.tc") {
  const auto m = lower(kFourIndex);
  REQUIRE(m.ops.size() == 1);
  CHECK(std::holds_alternative<TensorContract>(m.ops[0].kind));
  const auto spec = contraction_spec(m, m.ops[0]);
  const auto cls = classify_indices(spec.out_labels, spec.a_labels, spec.b_labels);
  CHECK(cls.contracted == std::vector<std::string>{"e", "f"});
  CHECK(validate(m).empty());
  const auto ta = print_ta(m);
  CHECK(ta.find("ta.tc") != std::string::npos);
  CHECK(ta.find("tensor<4x4x4x4xf64>") != std::string::npos);
}

TEST_CASE("chains lower to mult + set; accumulate modes are kept") {
  const auto m = lower(
      "IndexLabel [i,j,k,l] = [2];\nTensor<double> A([i,j]);\nTensor<double> B([j,k]);\n"
      "Tensor<double> C([k,l]);\nTensor<double> D([i,l]);\nD[i,l] -= 0.5 * A[i,j] * B[j,k] * C[k,l];\n");
  REQUIRE(m.ops.size() == 2);
  CHECK(std::get<MultOp>(m.ops[0].kind).operands.size() == 3);
  CHECK(std::get<MultOp>(m.ops[0].kind).alpha == 0.5);
  CHECK(std::holds_alternative<Set>(m.ops[1].kind));
  CHECK(m.ops[1].accumulate == Accumulate::Subtract);
}

TEST_CASE("lowering errors") {
  CHECK(lower_error("Tensor<double> A([i]);") == ErrorKind::UndeclaredIdentifier);
  CHECK(lower_error("IndexLabel i = [2];\nA[i] = 1.0;") == ErrorKind::UndeclaredIdentifier);
  CHECK(lower_error("IndexLabel [i,j] = [2];\nTensor<double> A([i,j]);\nA[i] = 1.0;") == ErrorKind::RankMismatch);
  CHECK(lower_error("IndexLabel [i,j] = [2];\nTensor<double> A([i,j]);\nTensor<double> B([i,j]);\n"
                    "A[i,j] = A[i,j] * B[i,i];") == ErrorKind::InvalidIndexUsage);
  CHECK(lower_error("IndexLabel [i,j] = [2];\nTensor<double> A([i,j]);\nTensor<double> B([i,j]);\n"
                    "B[i,j] = 1.0 * A[i,i];") == ErrorKind::RankMismatch);
}

TEST_CASE("lowering errors carry the statement span") {
  try {
    lower("IndexLabel i = [2];\n\n  Q[i] = 1.0;\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.span());
    CHECK(e.span()->line == 3);
  }
}

TEST_CASE("validate reports broken hand-built modules") {
  Module m;
  const auto a = m.add_label("a", {0, 2, 1});
  const auto b = m.add_label("b", {0, 2, 1});
  const auto e = m.add_label("e", {0, 2, 1});
  const auto A = m.add_tensor("A", {a, e});
  const auto B = m.add_tensor("B", {b, e});
  const auto C = m.add_tensor("C", {a});
  m.add_op({C, {a}}, Accumulate::Overwrite, TensorContract{1.0, {A, {a, e}}, {B, {b, e}}});
  const auto diags = validate(m);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].kind == ErrorKind::InvalidIndexUsage);
  CHECK(diags[0].message.find("b") != std::string::npos);

  Module m2;
  const auto i = m2.add_label("i", {0, 2, 1});
  const auto j = m2.add_label("j", {0, 2, 1});
  const auto k = m2.add_label("k", {0, 2, 1});
  const auto X = m2.add_tensor("X", {i, j});
  const auto Y = m2.add_tensor("Y", {i, k});
  m2.add_op({Y, {i, k}}, Accumulate::Overwrite, Copy{1.0, {X, {i, j}}});
  const auto d2 = validate(m2);
  REQUIRE(d2.size() == 1);
  CHECK(d2[0].kind == ErrorKind::RankMismatch);
}

TEST_CASE("slices must lie inside the declared range") {
  const auto ok = lower(
      "IndexLabel i = [8];\nIndexLabel h = [2:6];\nIndexLabel s = [0:8:2];\n"
      "Tensor<double> A([i]);\nTensor<double> B([h]);\nA[i] = 1.0;\nB[h] = A[h];\nA[s] = 2.0;\n");
  CHECK(ok.is_slice({ok.find_tensor("A").value(), {ok.find_label("h").value()}}));
  CHECK_FALSE(ok.is_slice({ok.find_tensor("A").value(), {ok.find_label("i").value()}}));
  CHECK(lower_error("IndexLabel i = [4];\nIndexLabel w = [2:9];\nTensor<double> A([i]);\nA[w] = 1.0;") ==
        ErrorKind::InvalidRange);
}

TEST_CASE("non-double element types are promoted with a warning") {
  const auto m = lower("IndexLabel i = [2];\nTensor<int> A([i]);\nA[i] = 1.0;\n");
  REQUIRE(m.warnings.size() == 1);
  CHECK(m.warnings[0].find("promoted") != std::string::npos);
}

TEST_CASE("multi-operand index checks") {
  CHECK_NOTHROW(check_multi_operand({{"i", "j"}, {"j", "k"}, {"k", "l"}}, {"i", "l"}));
  CHECK_THROWS_AS(check_multi_operand({{"i", "j"}, {"j", "k"}, {"j", "l"}}, {"i", "l"}), Error);
  CHECK_THROWS_AS(check_multi_operand({{"i", "j"}, {"j", "k"}}, {"i"}), Error);
}
