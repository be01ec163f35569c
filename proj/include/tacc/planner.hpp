#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tacc/ir.hpp"

namespace tacc::planner {

/// A permutation in "output position -> source position" form:
/// permuted[d] = source[perm[d]].
using Permutation = std::vector<int>;

bool is_identity(std::span<const int> perm);
Permutation inverse(std::span<const int> perm);

template <typename T>
std::vector<T> apply(std::span<const int> perm, const std::vector<T>& src) {
  std::vector<T> out;
  out.reserve(perm.size());
  for (int p : perm) out.push_back(src.at(static_cast<std::size_t>(p)));
  return out;
}

/// One operand of a multi-operand product.
struct Operand {
  std::string name;
  std::vector<std::string> labels;
};

/// Binary contraction tree. Leaves refer to operands by position.
struct ExprNode {
  int operand = -1;  // >= 0 for leaves
  std::shared_ptr<const ExprNode> left;
  std::shared_ptr<const ExprNode> right;
  std::vector<std::string> result_labels;
  std::int64_t flops = 0;          // this node only (0 for leaves)
  std::int64_t subtree_flops = 0;  // this node plus all descendants
  std::string encoding;

  bool is_leaf() const { return operand >= 0; }
};

struct ExprTree {
  std::shared_ptr<const ExprNode> root;
  std::int64_t total_flops = 0;

  /// S-expression over operand positions, e.g. "((0 1) 2)".
  std::string encoding() const;
  /// Same shape using operand names, e.g. "((A B) C)".
  std::string describe(const std::vector<Operand>& operands) const;
};

inline constexpr std::size_t kMaxOperands = 8;
inline constexpr std::size_t kMaxGroupRank = 6;

/// The natural left-to-right tree (((0 1) 2) ...).
ExprTree left_deep_tree(const std::vector<Operand>& operands, const std::vector<std::string>& out_labels,
                        const std::map<std::string, std::int64_t>& extents);

/// Exhaustive search over all binary trees on the operand set for the tree
/// with the fewest total flops. Ties prefer the natural left-deep tree, then
/// the lexicographically smallest encoding.
ExprTree order_expression(const std::vector<Operand>& operands, const std::vector<std::string>& out_labels,
                          const std::map<std::string, std::int64_t>& extents);

struct TTGTPlan {
  Permutation perm_a;
  Permutation perm_b;
  Permutation perm_c;  // maps the GEMM result layout to the requested output
  bool swap_operands = false;
  std::int64_t m = 1;
  std::int64_t n = 1;
  std::int64_t k = 1;
  bool skip_a = true;
  bool skip_b = true;
  bool skip_c = true;
  double cost = 0.0;

  std::vector<std::string> m_group;
  std::vector<std::string> n_group;
  std::vector<std::string> k_group;

  int non_identity_count() const { return !skip_a + !skip_b + !skip_c; }
};

/// Heuristic transpose cost: zero for the identity, otherwise
/// V * (1 + sum over moved dims d of (r - d) / r), doubled for outputs.
double permutation_cost(std::span<const int> perm, std::span<const std::int64_t> extents, bool is_output);

/// Every TTGT variant: both operand orders x all orderings of the M, N and K
/// index groups. Enumeration order: swap (false first), then M-, N-, K-group
/// orderings, each in lexicographic order of positions within the group's
/// classification order.
std::vector<TTGTPlan> enumerate_ttgt_variants(const ir::ContractionSpec& spec);

/// Cheapest variant; ties go to fewer transposes, then unswapped, then
/// enumeration order.
TTGTPlan select_ttgt(const ir::ContractionSpec& spec);

/// Total cost of a plan's three permutations, the quantity select_ttgt ranks.
double plan_cost(const ir::ContractionSpec& spec, const TTGTPlan& plan);

/// A binarized contraction with the tensor names it reads and writes.
struct ContractionStep {
  ir::ContractionSpec spec;
  std::string a_name;
  std::string b_name;
  std::string out_name;
  int a_operand = -1;  // operand position, or -1 for an intermediate
  int b_operand = -1;
  bool out_is_temp = false;
  std::int64_t flops = 0;
};

/// Post-order lowering of an ordered tree into binary contractions.
/// Intermediates are named t0, t1, ...; alpha is folded into the first step,
/// the final step carries the statement's accumulate mode.
std::vector<ContractionStep> binarize(const ExprTree& tree, const std::vector<Operand>& operands,
                                      const std::string& out_name, const std::vector<std::string>& out_labels,
                                      const std::map<std::string, std::int64_t>& extents, double alpha,
                                      ir::Accumulate mode);

/// Convenience wrapper over a module's MultOp/Set pair.
std::vector<ContractionStep> binarize(const ir::Module& module, const ir::IrOp& set_op);

/// Operands/extents of a MultOp in planner form.
std::vector<Operand> mult_operands(const ir::Module& module, const ir::IrOp& mult_op);
std::map<std::string, std::int64_t> mult_extents(const ir::Module& module, const ir::IrOp& mult_op);

}  // namespace tacc::planner
