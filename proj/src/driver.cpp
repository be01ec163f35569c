#include "tacc/driver.hpp"

#include <sstream>

#include <json.hpp>

#include "tacc/error.hpp"
#include "tacc/frontend.hpp"
#include "tacc/planner.hpp"

namespace tacc::driver {

using nlohmann::json;

Stage parse_stage(std::string_view name) {
  if (name == "ast") return Stage::Ast;
  if (name == "ta") return Stage::Ta;
  if (name == "plan") return Stage::Plan;
  if (name == "loops") return Stage::Loops;
  throw Error(ErrorKind::InvalidConfig, "unknown stage '" + std::string(name) + "' (ast, ta, plan, loops)");
}

ir::Module compile_source(std::string_view source) { return ir::lower_ast(frontend::parse_source(source)); }

std::string emit_ast(std::string_view source) { return frontend::dump_ast(frontend::parse_source(source)); }

std::string emit_ta(const ir::Module& module) { return ir::print_ta(module); }

namespace {

std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::string perm_text(const planner::Permutation& p) {
  std::string out = "(";
  for (std::size_t i = 0; i < p.size(); ++i) out += (i ? "," : "") + std::to_string(p[i]);
  return out + ")";
}

std::string ref_text(const ir::Module& m, const ir::IrLabeledTensor& ref) {
  return m.tensor(ref.tensor).name + "[" + join(m.label_names(ref)) + "]";
}

std::string_view assign_text(ir::Accumulate mode) {
  switch (mode) {
    case ir::Accumulate::Overwrite: return "=";
    case ir::Accumulate::Add: return "+=";
    case ir::Accumulate::Subtract: return "-=";
  }
  return "=";
}

/// A statement's binary contractions, planned.
struct PlannedStatement {
  std::string text;
  std::optional<planner::ExprTree> tree;
  std::optional<std::int64_t> natural_flops;
  std::vector<planner::Operand> operands;
  std::vector<planner::ContractionStep> steps;
  std::vector<planner::TTGTPlan> plans;
};

std::vector<PlannedStatement> plan_module(const ir::Module& m) {
  std::vector<PlannedStatement> out;
  for (const auto& op : m.ops) {
    if (const auto* tc = std::get_if<ir::TensorContract>(&op.kind)) {
      PlannedStatement ps;
      ps.text = ref_text(m, op.dest) + " " + std::string(assign_text(op.accumulate)) + " " + ref_text(m, tc->lhs_in) +
                " * " + ref_text(m, tc->rhs_in);
      planner::ContractionStep step;
      step.spec = ir::contraction_spec(m, op);
      step.a_name = m.tensor(tc->lhs_in.tensor).name;
      step.b_name = m.tensor(tc->rhs_in.tensor).name;
      step.out_name = m.tensor(op.dest.tensor).name;
      step.a_operand = 0;
      step.b_operand = 1;
      step.flops = ir::flop_count(step.spec);
      ps.plans.push_back(planner::select_ttgt(step.spec));
      ps.steps.push_back(std::move(step));
      out.push_back(std::move(ps));
    } else if (std::holds_alternative<ir::Set>(op.kind)) {
      const ir::IrOp& mult_op = m.op(std::get<ir::Set>(op.kind).source);
      const auto& mult = std::get<ir::MultOp>(mult_op.kind);
      PlannedStatement ps;
      ps.text = ref_text(m, op.dest) + " " + std::string(assign_text(op.accumulate)) + " ";
      for (std::size_t i = 0; i < mult.operands.size(); ++i) ps.text += (i ? " * " : "") + ref_text(m, mult.operands[i]);
      ps.operands = planner::mult_operands(m, mult_op);
      const auto extents = planner::mult_extents(m, mult_op);
      const auto out_labels = m.label_names(op.dest);
      ps.tree = planner::order_expression(ps.operands, out_labels, extents);
      ps.natural_flops = planner::left_deep_tree(ps.operands, out_labels, extents).total_flops;
      ps.steps = planner::binarize(*ps.tree, ps.operands, m.tensor(op.dest.tensor).name, out_labels, extents,
                                   mult.alpha, op.accumulate);
      for (const auto& s : ps.steps) ps.plans.push_back(planner::select_ttgt(s.spec));
      out.push_back(std::move(ps));
    }
  }
  return out;
}

std::string step_text(const planner::ContractionStep& s) {
  return s.out_name + "[" + join(s.spec.out_labels) + "] " + std::string(assign_text(s.spec.accumulate)) + " " +
         s.a_name + "[" + join(s.spec.a_labels) + "] * " + s.b_name + "[" + join(s.spec.b_labels) + "]";
}

std::string plan_text(const planner::TTGTPlan& p) {
  std::ostringstream os;
  os << "ttgt swap=" << (p.swap_operands ? "yes" : "no") << " m=" << p.m << " n=" << p.n << " k=" << p.k
     << " M=(" << join(p.m_group) << ") N=(" << join(p.n_group) << ") K=(" << join(p.k_group) << ")"
     << " perm_a=" << perm_text(p.perm_a) << (p.skip_a ? "[skip]" : "") << " perm_b=" << perm_text(p.perm_b)
     << (p.skip_b ? "[skip]" : "") << " perm_c=" << perm_text(p.perm_c) << (p.skip_c ? "[skip]" : "")
     << " cost=" << p.cost;
  return os.str();
}

}  // namespace

std::string emit_plan(const ir::Module& module) {
  std::ostringstream os;
  for (const auto& ps : plan_module(module)) {
    os << "statement " << ps.text << "\n";
    if (ps.tree) {
      os << "  tree " << ps.tree->describe(ps.operands) << " flops=" << ps.tree->total_flops
         << " natural=" << *ps.natural_flops << "\n";
    }
    for (std::size_t i = 0; i < ps.steps.size(); ++i) {
      os << "  step " << step_text(ps.steps[i]) << " flops=" << ps.steps[i].flops << "\n";
      os << "    " << plan_text(ps.plans[i]) << "\n";
    }
  }
  return os.str();
}

std::string emit_loops(const ir::Module& module, const loops::TilingConfig& cfg) {
  std::ostringstream os;
  auto transpose = [&](const char* what, const std::vector<std::string>& labels, const planner::Permutation& perm,
                       const ir::ContractionSpec& spec) {
    const auto ext = spec.extents_of(labels);
    os << "  " << what << " ";
    os << loops::tile_transpose(loops::make_transpose_nest(ext, perm, 1.0, labels), cfg).str();
  };
  for (const auto& ps : plan_module(module)) {
    for (std::size_t i = 0; i < ps.steps.size(); ++i) {
      const auto& step = ps.steps[i];
      const auto& p = ps.plans[i];
      os << "contraction " << step_text(step) << "\n";
      if (!p.skip_a) transpose("A:", step.spec.a_labels, p.perm_a, step.spec);
      if (!p.skip_b) transpose("B:", step.spec.b_labels, p.perm_b, step.spec);
      os << "  GEMM: " << loops::schedule_gemm(p.m, p.n, p.k, cfg).str();
      if (!p.skip_c) {
        std::vector<std::string> c_labels = p.m_group;
        c_labels.insert(c_labels.end(), p.n_group.begin(), p.n_group.end());
        transpose("C:", c_labels, p.perm_c, step.spec);
      }
    }
  }
  for (const auto& op : module.ops) {
    const auto* copy = std::get_if<ir::Copy>(&op.kind);
    if (copy == nullptr) continue;
    const auto src = module.label_names(copy->src);
    const auto dst = module.label_names(op.dest);
    planner::Permutation perm;
    for (const auto& l : dst) perm.push_back(static_cast<int>(std::find(src.begin(), src.end(), l) - src.begin()));
    std::vector<std::int64_t> ext;
    for (auto l : copy->src.labels) ext.push_back(module.label(l).range.extent());
    os << "copy " << ref_text(module, op.dest) << " = " << ref_text(module, copy->src) << "\n  ";
    os << loops::tile_transpose(loops::make_transpose_nest(ext, perm, copy->alpha, src), cfg).str();
  }
  return os.str();
}

std::string emit(std::string_view source, Stage stage, const loops::TilingConfig& cfg) {
  if (stage == Stage::Ast) return emit_ast(source);
  const ir::Module module = compile_source(source);
  switch (stage) {
    case Stage::Ta: return emit_ta(module);
    case Stage::Plan: return emit_plan(module);
    case Stage::Loops: return emit_loops(module, cfg);
    case Stage::Ast: break;
  }
  return {};
}

std::string plan_json(const ir::Module& module) {
  json out = json::array();
  for (const auto& ps : plan_module(module)) {
    json j;
    j["statement"] = ps.text;
    std::int64_t flops = 0;
    for (const auto& s : ps.steps) flops += s.flops;
    j["flops"] = flops;
    j["tree"] = ps.tree ? ps.tree->describe(ps.operands) : "(" + ps.steps[0].a_name + " " + ps.steps[0].b_name + ")";
    if (ps.natural_flops) j["natural_flops"] = *ps.natural_flops;
    json steps = json::array();
    for (std::size_t i = 0; i < ps.steps.size(); ++i) {
      const auto& p = ps.plans[i];
      steps.push_back({{"step", step_text(ps.steps[i])},
                       {"contraction", ir::einsum_string(ps.steps[i].spec)},
                       {"flops", ps.steps[i].flops},
                       {"perm_a", p.perm_a},
                       {"perm_b", p.perm_b},
                       {"perm_c", p.perm_c},
                       {"swap", p.swap_operands},
                       {"m", p.m},
                       {"n", p.n},
                       {"k", p.k},
                       {"cost", p.cost}});
    }
    j["steps"] = steps;
    out.push_back(j);
  }
  return out.dump(2);
}

}  // namespace tacc::driver
