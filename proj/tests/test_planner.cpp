#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tacc/frontend.hpp"
#include "tacc/planner.hpp"

using namespace tacc;
using namespace tacc::planner;

namespace {

ir::ContractionSpec four_index(std::int64_t extent = 4) {
  std::map<std::string, std::int64_t> ext;
  for (char ch : std::string("abcdef")) ext[std::string(1, ch)] = extent;
  return ir::spec_from_einsum("abcd-aebf-dfce", ext);
}

/// Plan validity: the permuted operands flatten into M/N/K groups.
void check_plan_structure(const ir::ContractionSpec& spec, const TTGTPlan& p) {
  auto cat = [](std::vector<std::string> x, const std::vector<std::string>& y) {
    x.insert(x.end(), y.begin(), y.end());
    return x;
  };
  const auto& first = p.swap_operands ? spec.b_labels : spec.a_labels;
  const auto& second = p.swap_operands ? spec.a_labels : spec.b_labels;
  const auto& perm_first = p.swap_operands ? p.perm_b : p.perm_a;
  const auto& perm_second = p.swap_operands ? p.perm_a : p.perm_b;
  CHECK(planner::apply(perm_first, first) == cat(p.m_group, p.k_group));
  CHECK(planner::apply(perm_second, second) == cat(p.k_group, p.n_group));
  CHECK(planner::apply(p.perm_c, cat(p.m_group, p.n_group)) == spec.out_labels);
  CHECK(p.skip_a == is_identity(p.perm_a));
  CHECK(p.skip_b == is_identity(p.perm_b));
  CHECK(p.skip_c == is_identity(p.perm_c));
  std::int64_t m = 1, n = 1, k = 1;
  for (const auto& l : p.m_group) m *= spec.extent(l);
  for (const auto& l : p.n_group) n *= spec.extent(l);
  for (const auto& l : p.k_group) k *= spec.extent(l);
  CHECK(p.m == m);
  CHECK(p.n == n);
  CHECK(p.k == k);
}

double oracle_plan_cost(const ir::ContractionSpec& spec, const TTGTPlan& p) {
  const auto c_src = [&] {
    auto v = p.m_group;
    v.insert(v.end(), p.n_group.begin(), p.n_group.end());
    return v;
  }();
  return oracle::perm_cost(p.perm_a, spec.extents_of(spec.a_labels), false) +
         oracle::perm_cost(p.perm_b, spec.extents_of(spec.b_labels), false) +
         oracle::perm_cost(p.perm_c, spec.extents_of(c_src), true);
}

std::vector<Operand> operands_of(const std::vector<std::vector<std::string>>& labels) {
  std::vector<Operand> ops;
  for (std::size_t i = 0; i < labels.size(); ++i) ops.push_back({std::string(1, static_cast<char>('A' + i)), labels[i]});
  return ops;
}

}  // namespace

TEST_CASE("permutation cost formula") {
  CHECK(permutation_cost(std::vector<int>{0, 1, 2}, std::vector<std::int64_t>{3, 4, 5}, false) == 0.0);
  CHECK(permutation_cost(std::vector<int>{1, 0}, std::vector<std::int64_t>{4, 5}, false) == 50.0);
  CHECK(permutation_cost(std::vector<int>{1, 0}, std::vector<std::int64_t>{4, 5}, true) == 100.0);
}

TEST_CASE("matmul has two variants and a free plan") {
  const auto spec = ir::spec_from_einsum("ik-ij-jk", {{"i", 3}, {"j", 4}, {"k", 5}});
  const auto plans = enumerate_ttgt_variants(spec);
  REQUIRE(plans.size() == 2);
  CHECK_FALSE(plans[0].swap_operands);
  CHECK(plans[0].non_identity_count() == 0);
  CHECK(plans[1].swap_operands);
  const auto best = select_ttgt(spec);
  CHECK(best.cost == 0.0);
  CHECK(best.non_identity_count() == 0);
  CHECK(best.m == 3);
  CHECK(best.n == 5);
  CHECK(best.k == 4);
}

TEST_CASE("abcd-aebf-dfce enumerates 16 valid variants") {
  const auto spec = four_index(3);
  const auto plans = enumerate_ttgt_variants(spec);
  CHECK(plans.size() == 16);
  bool found_ta_tb = false;
  for (const auto& p : plans) {
    check_plan_structure(spec, p);
    // TA[a,b,e,f], TB[e,f,d,c] and TC[a,b,d,c] -> C[a,b,c,d]
    if (!p.swap_operands && planner::apply(p.perm_a, spec.a_labels) == std::vector<std::string>{"a", "b", "e", "f"} &&
        planner::apply(p.perm_b, spec.b_labels) == std::vector<std::string>{"e", "f", "d", "c"}) {
      found_ta_tb = true;
      CHECK(p.perm_c == Permutation{0, 1, 3, 2});
    }
  }
  CHECK(found_ta_tb);
}

TEST_CASE("select_ttgt matches an independent scan") {
  for (const auto& spec : {four_index(3), ir::spec_from_einsum("ij-jk-ki", {{"i", 5}, {"j", 7}, {"k", 3}}),
                           ir::spec_from_einsum("abc-bda-dc", {{"a", 4}, {"b", 6}, {"c", 5}, {"d", 2}})}) {
    const auto plans = enumerate_ttgt_variants(spec);
    double best = 1e300;
    for (const auto& p : plans) {
      CHECK(p.cost == doctest::Approx(oracle_plan_cost(spec, p)));
      best = std::min(best, oracle_plan_cost(spec, p));
    }
    const auto chosen = select_ttgt(spec);
    CHECK(oracle_plan_cost(spec, chosen) == doctest::Approx(best));
  }
}

TEST_CASE("group rank above six is rejected") {
  std::map<std::string, std::int64_t> ext;
  for (char ch : std::string("abcdefgx")) ext[std::string(1, ch)] = 1;
  CHECK_THROWS_AS(enumerate_ttgt_variants(ir::spec_from_einsum("abcdefg-abcdefgx-x", ext)), Error);
}

TEST_CASE("chain ordering ties keep the natural tree") {
  // Both groupings cost 40,800 flops; the natural ((A B) C) wins the tie.
  const auto ops = operands_of({{"i", "j"}, {"j", "k"}, {"k", "l"}});
  const std::map<std::string, std::int64_t> ext{{"i", 2}, {"j", 100}, {"k", 100}, {"l", 2}};
  const auto tree = order_expression(ops, {"i", "l"}, ext);
  CHECK(tree.total_flops == 40800);
  CHECK(tree.encoding() == "((0 1) 2)");
  CHECK(tree.total_flops == oracle::min_tree_flops({{"i", "j"}, {"j", "k"}, {"k", "l"}}, {"i", "l"}, ext));
  CHECK(left_deep_tree(ops, {"i", "l"}, ext).total_flops == 40800);
}

TEST_CASE("two operands give a single contraction") {
  const auto ops = operands_of({{"i", "j"}, {"j", "k"}});
  const auto tree = order_expression(ops, {"i", "k"}, {{"i", 3}, {"j", 4}, {"k", 5}});
  REQUIRE(tree.root);
  CHECK_FALSE(tree.root->is_leaf());
  CHECK(tree.root->left->is_leaf());
  CHECK(tree.root->right->is_leaf());
  CHECK(tree.total_flops == 120);
}

TEST_CASE("skinny three-operand expression improves on the natural order") {
  const std::vector<std::vector<std::string>> labels{{"c", "d", "m", "n"}, {"i", "n", "a", "d"}, {"m", "c"}};
  const std::map<std::string, std::int64_t> ext{{"m", 8}, {"c", 8}, {"d", 64}, {"n", 64}, {"i", 64}, {"a", 64}};
  const auto tree = order_expression(operands_of(labels), {"i", "a"}, ext);
  const auto natural = oracle::natural_tree_flops(labels, {"i", "a"}, ext);
  CHECK(tree.total_flops == oracle::min_tree_flops(labels, {"i", "a"}, ext));
  CHECK(tree.total_flops < natural);
}

TEST_CASE("random 3-4 operand expressions reach the brute-force minimum") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> extent(2, 64);
  const std::vector<std::vector<std::vector<std::string>>> shapes = {
      {{"i", "j"}, {"j", "k"}, {"k", "l"}},
      {{"a", "b", "c"}, {"c", "d"}, {"d", "b", "e"}},
      {{"i", "j"}, {"j", "k"}, {"k", "l"}, {"l", "m"}},
      {{"a", "x"}, {"x", "b", "y"}, {"y", "c"}, {"c", "d"}},
      {{"p", "q"}, {"r", "s"}, {"q", "s"}, {"p", "t"}},
  };
  const std::vector<std::vector<std::string>> outs = {{"i", "l"}, {"a", "e"}, {"i", "m"}, {"a", "b", "d"}, {"r", "t"}};
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      std::map<std::string, std::int64_t> ext;
      for (const auto& op : shapes[s]) {
        for (const auto& l : op) ext.emplace(l, extent(rng));
      }
      const auto tree = order_expression(operands_of(shapes[s]), outs[s], ext);
      CHECK(tree.total_flops == oracle::min_tree_flops(shapes[s], outs[s], ext));
      CHECK(tree.total_flops <= oracle::natural_tree_flops(shapes[s], outs[s], ext));
    }
  }
}

TEST_CASE("too many operands") {
  std::vector<std::vector<std::string>> labels;
  std::map<std::string, std::int64_t> ext;
  for (int i = 0; i < 9; ++i) {
    const std::string x = "x" + std::to_string(i), y = "x" + std::to_string(i + 1);
    labels.push_back({x, y});
    ext[x] = ext[y] = 2;
  }
  try {
    order_expression(operands_of(labels), {"x0", "x9"}, ext);
    FAIL("expected TooManyOperands");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooManyOperands);
  }
}

TEST_CASE("binarize a chain") {
  const auto ops = operands_of({{"i", "j"}, {"j", "k"}, {"k", "l"}});
  const std::map<std::string, std::int64_t> ext{{"i", 2}, {"j", 3}, {"k", 4}, {"l", 5}};
  const auto tree = order_expression(ops, {"i", "l"}, ext);
  const auto steps = binarize(tree, ops, "D", {"i", "l"}, ext, 0.5, ir::Accumulate::Add);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].spec.alpha == 0.5);
  CHECK(steps[1].spec.alpha == 1.0);
  CHECK(steps[0].out_is_temp);
  CHECK(steps[0].out_name == "t0");
  CHECK(steps[0].spec.accumulate == ir::Accumulate::Overwrite);
  CHECK(steps[1].out_name == "D");
  CHECK(steps[1].spec.accumulate == ir::Accumulate::Add);
  std::int64_t total = 0;
  for (const auto& s : steps) total += ir::flop_count(s.spec);
  CHECK(total == tree.total_flops);
}

TEST_CASE("binarize to a scalar output") {
  // A[i,j] * B[j] * C[i] -> s[]
  const auto ops = operands_of({{"i", "j"}, {"j"}, {"i"}});
  const std::map<std::string, std::int64_t> ext{{"i", 3}, {"j", 4}};
  const auto steps = binarize(left_deep_tree(ops, {}, ext), ops, "s", {}, ext, 1.0, ir::Accumulate::Overwrite);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].spec.out_labels == std::vector<std::string>{"i"});
  CHECK(steps[1].spec.out_labels.empty());
  CHECK(steps[1].spec.a_labels == std::vector<std::string>{"i"});
  CHECK(steps[1].spec.b_labels == std::vector<std::string>{"i"});
}

TEST_CASE("two-operand mult binarizes like a direct contraction") {
  const auto m = ir::lower_ast(frontend::parse_source(
      "IndexLabel [i,j,k] = [3];\nTensor<double> A([i,j]);\nTensor<double> B([j,k]);\nTensor<double> C([i,k]);\n"
      "A[i,j] = 1.0;\nB[j,k] = 1.0;\nC[i,k] = A[i,j] * B[j,k];\n"));
  const auto& op = m.ops.back();
  if (std::holds_alternative<ir::Set>(op.kind)) {
    const auto steps = binarize(m, op);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].spec.out_labels == std::vector<std::string>{"i", "k"});
  } else {
    CHECK(std::holds_alternative<ir::TensorContract>(op.kind));
  }
}
