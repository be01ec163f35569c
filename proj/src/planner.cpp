#include "tacc/planner.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <set>
#include <unordered_map>

namespace tacc::planner {

bool is_identity(std::span<const int> perm) {
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] != static_cast<int>(i)) return false;
  }
  return true;
}

Permutation inverse(std::span<const int> perm) {
  Permutation inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw Error(ErrorKind::Overflow, "flop count exceeds 64-bit range");
  return out;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw Error(ErrorKind::Overflow, "flop count exceeds 64-bit range");
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::int64_t extent_of(const std::map<std::string, std::int64_t>& extents, const std::string& l) {
  auto it = extents.find(l);
  if (it == extents.end()) throw Error(ErrorKind::InvalidIndexUsage, "no extent for index '" + l + "'");
  return it->second;
}

/// Shared context for building tree nodes over one expression.
class TreeBuilder {
public:
  TreeBuilder(const std::vector<Operand>& operands, const std::vector<std::string>& out,
              const std::map<std::string, std::int64_t>& extents)
      : operands_(operands), out_(out), extents_(extents) {
    if (operands.size() < 2) {
      throw Error(ErrorKind::InvalidIndexUsage, "a product needs at least two operands");
    }
    if (operands.size() > kMaxOperands) {
      throw Error(ErrorKind::TooManyOperands,
                  "expression has " + std::to_string(operands.size()) + " operands; at most " +
                      std::to_string(kMaxOperands) + " are supported");
    }
    std::vector<std::vector<std::string>> labels;
    for (const auto& op : operands) labels.push_back(op.labels);
    ir::check_multi_operand(labels, out);
    for (const auto& op : operands) {
      for (const auto& l : op.labels) extent_of(extents, l);
    }
  }

  std::size_t size() const { return operands_.size(); }

  std::shared_ptr<const ExprNode> leaf(int i) const {
    auto node = std::make_shared<ExprNode>();
    node->operand = i;
    node->result_labels = operands_[static_cast<std::size_t>(i)].labels;
    node->encoding = std::to_string(i);
    return node;
  }

  /// `mask` is the leaf set of the combined node.
  std::shared_ptr<const ExprNode> combine(std::shared_ptr<const ExprNode> l, std::shared_ptr<const ExprNode> r,
                                          unsigned mask) const {
    auto node = std::make_shared<ExprNode>();
    std::int64_t volume = 2;
    for (const auto* side : {&l->result_labels, &r->result_labels}) {
      for (const auto& idx : *side) {
        const bool in_both = side == &r->result_labels && contains(l->result_labels, idx);
        if (in_both) continue;  // counted once, from the left side
        volume = checked_mul(volume, extent_of(extents_, idx));
        if (needed_outside(idx, mask)) node->result_labels.push_back(idx);
      }
    }
    node->flops = volume;
    node->subtree_flops = checked_add(checked_add(l->subtree_flops, r->subtree_flops), volume);
    node->encoding = "(" + l->encoding + " " + r->encoding + ")";
    node->left = std::move(l);
    node->right = std::move(r);
    return node;
  }

private:
  const std::vector<Operand>& operands_;
  const std::vector<std::string>& out_;
  const std::map<std::string, std::int64_t>& extents_;

  bool needed_outside(const std::string& idx, unsigned mask) const {
    if (contains(out_, idx)) return true;
    for (std::size_t i = 0; i < operands_.size(); ++i) {
      if (!(mask & (1u << i)) && contains(operands_[i].labels, idx)) return true;
    }
    return false;
  }
};

using NodeList = std::vector<std::shared_ptr<const ExprNode>>;

/// All canonical trees on `mask`: the left child always holds the lowest
/// operand of its parent, so each unordered tree is produced exactly once.
const NodeList& trees_for(unsigned mask, const TreeBuilder& builder, std::unordered_map<unsigned, NodeList>& memo) {
  if (auto it = memo.find(mask); it != memo.end()) return it->second;
  NodeList result;
  if (std::popcount(mask) == 1) {
    result.push_back(builder.leaf(std::countr_zero(mask)));
  } else {
    const unsigned low = mask & (~mask + 1);
    const unsigned rest = mask & ~low;
    // Enumerate subsets of `rest` to join `low` on the left.
    for (unsigned sub = rest;; sub = (sub - 1) & rest) {
      const unsigned left = low | sub;
      const unsigned right = mask & ~left;
      if (right != 0) {
        const NodeList& ls = trees_for(left, builder, memo);
        const NodeList& rs = trees_for(right, builder, memo);
        for (const auto& l : ls) {
          for (const auto& r : rs) result.push_back(builder.combine(l, r, mask));
        }
      }
      if (sub == 0) break;
    }
  }
  return memo.emplace(mask, std::move(result)).first->second;
}

void describe_node(const ExprNode& node, const std::vector<Operand>& operands, std::string& out) {
  if (node.is_leaf()) {
    out += operands.at(static_cast<std::size_t>(node.operand)).name;
    return;
  }
  out += "(";
  describe_node(*node.left, operands, out);
  out += " ";
  describe_node(*node.right, operands, out);
  out += ")";
}

}  // namespace

std::string ExprTree::encoding() const {
  return root ? root->encoding : std::string();
}

std::string ExprTree::describe(const std::vector<Operand>& operands) const {
  std::string out;
  if (root) describe_node(*root, operands, out);
  return out;
}

ExprTree left_deep_tree(const std::vector<Operand>& operands, const std::vector<std::string>& out_labels,
                        const std::map<std::string, std::int64_t>& extents) {
  TreeBuilder builder(operands, out_labels, extents);
  auto node = builder.leaf(0);
  unsigned mask = 1;
  for (std::size_t i = 1; i < operands.size(); ++i) {
    mask |= 1u << i;
    node = builder.combine(node, builder.leaf(static_cast<int>(i)), mask);
  }
  return ExprTree{node, node->subtree_flops};
}

ExprTree order_expression(const std::vector<Operand>& operands, const std::vector<std::string>& out_labels,
                          const std::map<std::string, std::int64_t>& extents) {
  TreeBuilder builder(operands, out_labels, extents);
  const ExprTree natural = left_deep_tree(operands, out_labels, extents);

  std::unordered_map<unsigned, NodeList> memo;
  const unsigned full = (1u << operands.size()) - 1;
  const NodeList& all = trees_for(full, builder, memo);

  std::shared_ptr<const ExprNode> best;
  for (const auto& tree : all) {
    if (!best || tree->subtree_flops < best->subtree_flops ||
        (tree->subtree_flops == best->subtree_flops && tree->encoding < best->encoding)) {
      best = tree;
    }
  }
  if (natural.total_flops == best->subtree_flops) return natural;
  return ExprTree{best, best->subtree_flops};
}

// ---------------------------------------------------------------------------
// TTGT

double permutation_cost(std::span<const int> perm, std::span<const std::int64_t> extents, bool is_output) {
  if (is_identity(perm)) return 0.0;
  const auto rank = static_cast<std::int64_t>(perm.size());
  double volume = 1.0;
  for (auto e : extents) volume *= static_cast<double>(e);
  // (1 + sum (r - d) / r) computed as a single quotient so equal costs compare equal.
  std::int64_t numerator = rank;
  for (std::int64_t d = 0; d < rank; ++d) {
    if (perm[static_cast<std::size_t>(d)] != d) numerator += rank - d;
  }
  const double cost = volume * static_cast<double>(numerator) / static_cast<double>(rank);
  return is_output ? 2.0 * cost : cost;
}

namespace {

Permutation positions_in(const std::vector<std::string>& order, const std::vector<std::string>& source) {
  Permutation perm;
  perm.reserve(order.size());
  for (const auto& l : order) {
    perm.push_back(static_cast<int>(std::find(source.begin(), source.end(), l) - source.begin()));
  }
  return perm;
}

std::vector<std::vector<std::string>> orderings(const std::vector<std::string>& group) {
  if (group.size() > kMaxGroupRank) {
    throw Error(ErrorKind::RankTooHigh, "index group of size " + std::to_string(group.size()) +
                                            " exceeds the enumeration bound of " + std::to_string(kMaxGroupRank));
  }
  std::vector<int> idx(group.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<std::string>> out;
  do {
    std::vector<std::string> o;
    for (int i : idx) o.push_back(group[static_cast<std::size_t>(i)]);
    out.push_back(std::move(o));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

template <typename... Groups>
std::vector<std::string> concat(const Groups&... groups) {
  std::vector<std::string> out;
  (out.insert(out.end(), groups.begin(), groups.end()), ...);
  return out;
}

}  // namespace

double plan_cost(const ir::ContractionSpec& spec, const TTGTPlan& plan) {
  const auto a_ext = spec.extents_of(spec.a_labels);
  const auto b_ext = spec.extents_of(spec.b_labels);
  const auto c_ext = spec.extents_of(concat(plan.m_group, plan.n_group));
  return permutation_cost(plan.perm_a, a_ext, false) + permutation_cost(plan.perm_b, b_ext, false) +
         permutation_cost(plan.perm_c, c_ext, true);
}

std::vector<TTGTPlan> enumerate_ttgt_variants(const ir::ContractionSpec& spec) {
  const ir::IndexClasses cls = ir::classify_indices(spec.out_labels, spec.a_labels, spec.b_labels);
  const auto k_orders = orderings(cls.contracted);

  std::vector<TTGTPlan> plans;
  for (bool swap : {false, true}) {
    const auto& first = swap ? spec.b_labels : spec.a_labels;
    const auto& second = swap ? spec.a_labels : spec.b_labels;
    const auto m_orders = orderings(swap ? cls.free_b : cls.free_a);
    const auto n_orders = orderings(swap ? cls.free_a : cls.free_b);
    for (const auto& mg : m_orders) {
      for (const auto& ng : n_orders) {
        for (const auto& kg : k_orders) {
          TTGTPlan plan;
          plan.swap_operands = swap;
          plan.m_group = mg;
          plan.n_group = ng;
          plan.k_group = kg;
          Permutation perm_first = positions_in(concat(mg, kg), first);
          Permutation perm_second = positions_in(concat(kg, ng), second);
          plan.perm_a = swap ? perm_second : perm_first;
          plan.perm_b = swap ? perm_first : perm_second;
          plan.perm_c = positions_in(spec.out_labels, concat(mg, ng));
          plan.skip_a = is_identity(plan.perm_a);
          plan.skip_b = is_identity(plan.perm_b);
          plan.skip_c = is_identity(plan.perm_c);
          plan.m = plan.n = plan.k = 1;
          for (const auto& l : mg) plan.m = checked_mul(plan.m, spec.extent(l));
          for (const auto& l : ng) plan.n = checked_mul(plan.n, spec.extent(l));
          for (const auto& l : kg) plan.k = checked_mul(plan.k, spec.extent(l));
          plan.cost = plan_cost(spec, plan);
          plans.push_back(std::move(plan));
        }
      }
    }
  }
  return plans;
}

TTGTPlan select_ttgt(const ir::ContractionSpec& spec) {
  auto plans = enumerate_ttgt_variants(spec);
  std::size_t best = 0;
  for (std::size_t i = 1; i < plans.size(); ++i) {
    const auto& p = plans[i];
    const auto& b = plans[best];
    if (p.cost < b.cost || (p.cost == b.cost && p.non_identity_count() < b.non_identity_count())) best = i;
    // Remaining ties keep the earlier plan: unswapped variants come first.
  }
  return plans[best];
}

// ---------------------------------------------------------------------------
// Binarization

std::vector<ContractionStep> binarize(const ExprTree& tree, const std::vector<Operand>& operands,
                                      const std::string& out_name, const std::vector<std::string>& out_labels,
                                      const std::map<std::string, std::int64_t>& extents, double alpha,
                                      ir::Accumulate mode) {
  std::vector<ContractionStep> steps;
  int next_temp = 0;

  struct Value {
    std::string name;
    std::vector<std::string> labels;
    int operand;
  };

  auto emit = [&](auto&& self, const ExprNode& node) -> Value {
    if (node.is_leaf()) {
      const auto& op = operands.at(static_cast<std::size_t>(node.operand));
      return Value{op.name, op.labels, node.operand};
    }
    const Value l = self(self, *node.left);
    const Value r = self(self, *node.right);
    const bool is_root = &node == tree.root.get();

    ContractionStep step;
    step.a_name = l.name;
    step.b_name = r.name;
    step.a_operand = l.operand;
    step.b_operand = r.operand;
    step.spec.a_labels = l.labels;
    step.spec.b_labels = r.labels;
    step.spec.out_labels = is_root ? out_labels : node.result_labels;
    step.spec.alpha = steps.empty() ? alpha : 1.0;
    step.spec.accumulate = is_root ? mode : ir::Accumulate::Overwrite;
    for (const auto* group : {&l.labels, &r.labels}) {
      for (const auto& idx : *group) step.spec.extents[idx] = extent_of(extents, idx);
    }
    step.out_name = is_root ? out_name : "t" + std::to_string(next_temp++);
    step.out_is_temp = !is_root;
    step.flops = node.flops;
    steps.push_back(step);
    return Value{step.out_name, step.spec.out_labels, -1};
  };

  if (!tree.root || tree.root->is_leaf()) {
    throw Error(ErrorKind::InvalidIndexUsage, "binarize needs a tree with at least one contraction");
  }
  emit(emit, *tree.root);
  return steps;
}

std::vector<Operand> mult_operands(const ir::Module& module, const ir::IrOp& mult_op) {
  const auto& mult = std::get<ir::MultOp>(mult_op.kind);
  std::vector<Operand> out;
  for (const auto& ref : mult.operands) out.push_back(Operand{module.tensor(ref.tensor).name, module.label_names(ref)});
  return out;
}

std::map<std::string, std::int64_t> mult_extents(const ir::Module& module, const ir::IrOp& mult_op) {
  const auto& mult = std::get<ir::MultOp>(mult_op.kind);
  std::map<std::string, std::int64_t> extents;
  for (const auto& ref : mult.operands) {
    for (ir::LabelId l : ref.labels) extents[module.label(l).name] = module.label(l).range.extent();
  }
  for (ir::LabelId l : mult_op.dest.labels) extents[module.label(l).name] = module.label(l).range.extent();
  return extents;
}

std::vector<ContractionStep> binarize(const ir::Module& module, const ir::IrOp& set_op) {
  const auto& set = std::get<ir::Set>(set_op.kind);
  const ir::IrOp& mult_op = module.op(set.source);
  const auto operands = mult_operands(module, mult_op);
  const auto extents = mult_extents(module, mult_op);
  const auto out_labels = module.label_names(set_op.dest);
  const ExprTree tree = order_expression(operands, out_labels, extents);
  return binarize(tree, operands, module.tensor(set_op.dest.tensor).name, out_labels, extents,
                  std::get<ir::MultOp>(mult_op.kind).alpha, set_op.accumulate);
}

}  // namespace tacc::planner
