#include "tacc/ir.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tacc::ir {

std::string_view to_string(Accumulate mode) {
  switch (mode) {
    case Accumulate::Overwrite: return "overwrite";
    case Accumulate::Add: return "add";
    case Accumulate::Subtract: return "subtract";
  }
  return "?";
}

namespace {

std::string join(const std::vector<std::string>& items, std::string_view sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string format_scalar(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Module

LabelId Module::add_label(std::string name, Range range) {
  LabelId id{static_cast<std::uint32_t>(labels.size())};
  labels.push_back(IrIndexLabel{id, std::move(name), range});
  return id;
}

TensorId Module::add_tensor(std::string name, std::vector<LabelId> dims, frontend::ElementType type) {
  TensorId id{static_cast<std::uint32_t>(tensors.size())};
  tensors.push_back(IrTensorDecl{id, std::move(name), type, std::move(dims)});
  return id;
}

OpId Module::add_op(IrLabeledTensor dest, Accumulate mode, decltype(IrOp::kind) kind, Span span) {
  OpId id{static_cast<std::uint32_t>(ops.size())};
  ops.push_back(IrOp{id, std::move(dest), mode, std::move(kind), span});
  return id;
}

std::optional<TensorId> Module::find_tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.id;
  }
  return std::nullopt;
}

std::optional<LabelId> Module::find_label(std::string_view name) const {
  for (const auto& l : labels) {
    if (l.name == name) return l.id;
  }
  return std::nullopt;
}

std::vector<std::int64_t> Module::declared_extents(TensorId id) const {
  std::vector<std::int64_t> out;
  for (LabelId d : tensor(id).dims) out.push_back(label(d).range.extent());
  return out;
}

std::vector<std::string> Module::label_names(const IrLabeledTensor& ref) const {
  std::vector<std::string> out;
  for (LabelId l : ref.labels) out.push_back(label(l).name);
  return out;
}

bool Module::is_slice(const IrLabeledTensor& ref) const {
  const auto& decl = tensor(ref.tensor);
  for (std::size_t d = 0; d < ref.labels.size() && d < decl.dims.size(); ++d) {
    if (!(label(ref.labels[d]).range == label(decl.dims[d]).range)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// ContractionSpec

std::int64_t ContractionSpec::extent(const std::string& label) const {
  auto it = extents.find(label);
  if (it == extents.end()) throw Error(ErrorKind::InvalidIndexUsage, "no extent for index '" + label + "'");
  return it->second;
}

std::vector<std::int64_t> ContractionSpec::extents_of(const std::vector<std::string>& labels) const {
  std::vector<std::int64_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(extent(l));
  return out;
}

ContractionSpec spec_from_einsum(const std::string& contraction, const std::map<std::string, std::int64_t>& extents,
                                 double alpha, Accumulate mode) {
  std::vector<std::vector<std::string>> parts(1);
  for (char c : contraction) {
    if (c == '-') {
      parts.emplace_back();
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      parts.back().push_back(std::string(1, c));
    } else if (c != ' ') {
      throw Error(ErrorKind::SchemaError, "invalid character in contraction string '" + contraction + "'");
    }
  }
  if (parts.size() != 3) {
    throw Error(ErrorKind::SchemaError, "contraction must have the form out-a-b, got '" + contraction + "'");
  }
  ContractionSpec spec;
  spec.out_labels = parts[0];
  spec.a_labels = parts[1];
  spec.b_labels = parts[2];
  spec.alpha = alpha;
  spec.accumulate = mode;
  for (const auto* group : {&spec.out_labels, &spec.a_labels, &spec.b_labels}) {
    for (const auto& l : *group) {
      auto it = extents.find(l);
      if (it == extents.end()) throw Error(ErrorKind::SchemaError, "missing extent for index '" + l + "'");
      if (it->second < 1) throw Error(ErrorKind::SchemaError, "extent of '" + l + "' must be >= 1");
      spec.extents[l] = it->second;
    }
  }
  classify_indices(spec.out_labels, spec.a_labels, spec.b_labels);
  return spec;
}

std::string einsum_string(const ContractionSpec& spec) {
  return join(spec.out_labels, "") + "-" + join(spec.a_labels, "") + "-" + join(spec.b_labels, "");
}

// ---------------------------------------------------------------------------
// Index classification

namespace {

void check_unique(const std::vector<std::string>& labels, std::string_view what) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) {
      throw Error(ErrorKind::InvalidIndexUsage,
                  "index '" + l + "' appears twice in " + std::string(what));
    }
  }
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

IndexClasses classify_indices(const std::vector<std::string>& out, const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  check_unique(out, "the output");
  check_unique(a, "the first operand");
  check_unique(b, "the second operand");

  IndexClasses classes;
  for (const auto& l : a) {
    const bool in_b = contains(b, l);
    const bool in_out = contains(out, l);
    if (in_b && in_out) {
      throw Error(ErrorKind::InvalidIndexUsage, "index '" + l + "' appears in both inputs and the output");
    }
    if (in_b) classes.contracted.push_back(l);
    else if (in_out) classes.free_a.push_back(l);
    else throw Error(ErrorKind::InvalidIndexUsage, "index '" + l + "' must appear in the output");
  }
  for (const auto& l : b) {
    if (contains(a, l)) continue;
    if (!contains(out, l)) throw Error(ErrorKind::InvalidIndexUsage, "index '" + l + "' must appear in the output");
    classes.free_b.push_back(l);
  }
  for (const auto& l : out) {
    if (!contains(a, l) && !contains(b, l)) {
      throw Error(ErrorKind::InvalidIndexUsage, "output index '" + l + "' appears in neither input");
    }
  }
  return classes;
}

std::int64_t flop_count(const ContractionSpec& spec) {
  const IndexClasses c = classify_indices(spec.out_labels, spec.a_labels, spec.b_labels);
  std::int64_t total = 2;
  for (const auto* group : {&c.free_a, &c.free_b, &c.contracted}) {
    for (const auto& l : *group) {
      if (__builtin_mul_overflow(total, spec.extent(l), &total)) {
        throw Error(ErrorKind::Overflow, "flop count exceeds 64-bit range");
      }
    }
  }
  return total;
}

void check_multi_operand(const std::vector<std::vector<std::string>>& operands, const std::vector<std::string>& out) {
  check_unique(out, "the output");
  std::map<std::string, int> count;
  for (std::size_t i = 0; i < operands.size(); ++i) {
    check_unique(operands[i], "operand " + std::to_string(i));
    for (const auto& l : operands[i]) ++count[l];
  }
  for (const auto& l : out) {
    if (!count.contains(l)) {
      throw Error(ErrorKind::InvalidIndexUsage, "output index '" + l + "' appears in no operand");
    }
    ++count[l];
  }
  for (const auto& [l, n] : count) {
    if (n != 2) {
      throw Error(ErrorKind::InvalidIndexUsage,
                  "index '" + l + "' must appear in exactly two of the operands and output (found " +
                      std::to_string(n) + ")");
    }
  }
}

// ---------------------------------------------------------------------------
// Lowering

namespace {

class Lowerer {
public:
  Module run(const frontend::SourceProgram& program) {
    for (const auto& stmt : program.statements) {
      std::visit([&](const auto& s) { lower(s); }, stmt);
    }
    return std::move(module_);
  }

private:
  Module module_;

  void lower(const frontend::IndexLabelDecl& decl) {
    for (const auto& name : decl.names) {
      if (module_.find_label(name)) {
        throw Error(ErrorKind::SyntaxError, "index label '" + name + "' redeclared", decl.span);
      }
      module_.add_label(name, Range{decl.range.begin, decl.range.end, decl.range.increment});
    }
  }

  void lower(const frontend::TensorDeclStmt& decl) {
    if (module_.find_tensor(decl.name)) {
      throw Error(ErrorKind::SyntaxError, "tensor '" + decl.name + "' redeclared", decl.span);
    }
    std::vector<LabelId> dims;
    for (const auto& d : decl.dim_labels) dims.push_back(resolve_label(d, decl.span));
    if (decl.element_type != frontend::ElementType::Double) {
      module_.warnings.push_back("tensor '" + decl.name + "' declared as " +
                                 std::string(frontend::to_string(decl.element_type)) +
                                 "; promoted to double");
    }
    module_.add_tensor(decl.name, std::move(dims), decl.element_type);
  }

  void lower(const frontend::TensorOpStmt& stmt) {
    const IrLabeledTensor dest = resolve(stmt.lhs);
    const Accumulate mode = stmt.assign_op == frontend::AssignOp::Assign      ? Accumulate::Overwrite
                            : stmt.assign_op == frontend::AssignOp::AddAssign ? Accumulate::Add
                                                                              : Accumulate::Subtract;
    const auto& rhs = stmt.rhs;
    std::vector<OpId> emitted;
    if (rhs.kind == frontend::RhsExpr::Kind::Scalar) {
      emitted.push_back(module_.add_op(dest, mode, Fill{rhs.scalar}, stmt.span));
    } else {
      std::vector<IrLabeledTensor> operands;
      for (const auto& ref : rhs.operands) operands.push_back(resolve(ref));
      if (operands.size() == 1) {
        emitted.push_back(module_.add_op(dest, mode, Copy{rhs.alpha, operands[0]}, stmt.span));
      } else if (operands.size() == 2) {
        emitted.push_back(
            module_.add_op(dest, mode, TensorContract{rhs.alpha, operands[0], operands[1]}, stmt.span));
      } else {
        const OpId mult = module_.add_op(dest, Accumulate::Overwrite, MultOp{operands, rhs.alpha}, stmt.span);
        emitted.push_back(mult);
        emitted.push_back(module_.add_op(dest, mode, Set{mult}, stmt.span));
      }
    }
    for (const auto& diag : validate(module_)) {
      if (std::find(emitted.begin(), emitted.end(), diag.op) != emitted.end()) {
        throw Error(diag.kind, diag.message, stmt.span);
      }
    }
  }

  LabelId resolve_label(const std::string& name, const Span& span) {
    auto id = module_.find_label(name);
    if (!id) throw Error(ErrorKind::UndeclaredIdentifier, "undeclared index label '" + name + "'", span);
    return *id;
  }

  IrLabeledTensor resolve(const frontend::LabeledTensorRef& ref) {
    auto tensor = module_.find_tensor(ref.tensor_name);
    if (!tensor) throw Error(ErrorKind::UndeclaredIdentifier, "undeclared tensor '" + ref.tensor_name + "'", ref.span);
    IrLabeledTensor out{*tensor, {}};
    for (const auto& l : ref.labels) out.labels.push_back(resolve_label(l, ref.span));
    const auto rank = module_.tensor(*tensor).dims.size();
    if (out.labels.size() != rank) {
      throw Error(ErrorKind::RankMismatch,
                  "tensor '" + ref.tensor_name + "' has rank " + std::to_string(rank) + " but " +
                      std::to_string(out.labels.size()) + " labels were given",
                  ref.span);
    }
    return out;
  }
};

}  // namespace

Module lower_ast(const frontend::SourceProgram& program) {
  return Lowerer{}.run(program);
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class Validator {
public:
  explicit Validator(const Module& m) : m_(m) {}

  std::vector<Diagnostic> run() {
    for (const auto& op : m_.ops) check(op);
    return std::move(diags_);
  }

private:
  const Module& m_;
  std::vector<Diagnostic> diags_;

  void report(const IrOp& op, ErrorKind kind, std::string message) {
    diags_.push_back(Diagnostic{kind, op.id, std::move(message)});
  }

  bool check_ref(const IrOp& op, const IrLabeledTensor& ref) {
    if (ref.tensor.value >= m_.tensors.size()) {
      report(op, ErrorKind::UndeclaredIdentifier, "unknown tensor handle " + std::to_string(ref.tensor.value));
      return false;
    }
    for (LabelId l : ref.labels) {
      if (l.value >= m_.labels.size()) {
        report(op, ErrorKind::UndeclaredIdentifier, "unknown label handle " + std::to_string(l.value));
        return false;
      }
    }
    const auto& decl = m_.tensor(ref.tensor);
    if (ref.labels.size() != decl.dims.size()) {
      report(op, ErrorKind::RankMismatch,
             "tensor '" + decl.name + "' has rank " + std::to_string(decl.dims.size()) + " but " +
                 std::to_string(ref.labels.size()) + " labels were given");
      return false;
    }
    for (std::size_t d = 0; d < decl.dims.size(); ++d) {
      const Range& declared = m_.label(decl.dims[d]).range;
      const Range& used = m_.label(ref.labels[d]).range;
      if (used == declared) continue;
      const std::int64_t last = used.begin + (used.extent() - 1) * used.increment;
      const bool aligned = (used.begin - declared.begin) % declared.increment == 0 &&
                           used.increment % declared.increment == 0;
      if (used.begin < declared.begin || last >= declared.end || !aligned) {
        report(op, ErrorKind::InvalidRange,
               "label '" + m_.label(ref.labels[d]).name + "' is not a slice of dimension " + std::to_string(d) +
                   " of tensor '" + decl.name + "'");
        return false;
      }
    }
    return true;
  }

  void check_unique_labels(const IrOp& op, const IrLabeledTensor& ref) {
    try {
      check_unique(m_.label_names(ref), "tensor '" + m_.tensor(ref.tensor).name + "'");
    } catch (const Error& e) {
      report(op, e.kind(), e.message());
    }
  }

  void check(const IrOp& op) {
    if (!check_ref(op, op.dest)) return;
    if (std::holds_alternative<Fill>(op.kind)) {
      check_unique_labels(op, op.dest);
    } else if (const auto* copy = std::get_if<Copy>(&op.kind)) {
      if (!check_ref(op, copy->src)) return;
      auto dst = m_.label_names(op.dest);
      auto src = m_.label_names(copy->src);
      std::sort(dst.begin(), dst.end());
      std::sort(src.begin(), src.end());
      if (dst != src) {
        report(op, ErrorKind::RankMismatch, "copy source and destination label sets differ");
        return;
      }
      check_unique_labels(op, op.dest);
    } else if (const auto* tc = std::get_if<TensorContract>(&op.kind)) {
      if (!check_ref(op, tc->lhs_in) || !check_ref(op, tc->rhs_in)) return;
      try {
        classify_indices(m_.label_names(op.dest), m_.label_names(tc->lhs_in), m_.label_names(tc->rhs_in));
      } catch (const Error& e) {
        report(op, e.kind(), e.message());
      }
    } else if (const auto* mult = std::get_if<MultOp>(&op.kind)) {
      if (mult->operands.size() < 2) {
        report(op, ErrorKind::InvalidIndexUsage, "ta.mult needs at least two operands");
        return;
      }
      std::vector<std::vector<std::string>> names;
      for (const auto& operand : mult->operands) {
        if (!check_ref(op, operand)) return;
        names.push_back(m_.label_names(operand));
      }
      try {
        check_multi_operand(names, m_.label_names(op.dest));
      } catch (const Error& e) {
        report(op, e.kind(), e.message());
      }
    } else {
      const auto& set = std::get<Set>(op.kind);
      if (set.source.value >= op.id.value || !std::holds_alternative<MultOp>(m_.op(set.source).kind)) {
        report(op, ErrorKind::Internal, "ta.set must consume an earlier ta.mult");
      }
    }
  }
};

}  // namespace

std::vector<Diagnostic> validate(const Module& module) {
  return Validator(module).run();
}

ContractionSpec contraction_spec(const Module& module, const IrOp& op) {
  const auto& tc = std::get<TensorContract>(op.kind);
  ContractionSpec spec;
  spec.out_labels = module.label_names(op.dest);
  spec.a_labels = module.label_names(tc.lhs_in);
  spec.b_labels = module.label_names(tc.rhs_in);
  for (const auto* ref : {&op.dest, &tc.lhs_in, &tc.rhs_in}) {
    for (LabelId l : ref->labels) spec.extents[module.label(l).name] = module.label(l).range.extent();
  }
  spec.alpha = tc.alpha;
  spec.accumulate = op.accumulate;
  return spec;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string type_suffix(frontend::ElementType t) {
  switch (t) {
    case frontend::ElementType::Int: return "i32";
    case frontend::ElementType::Float: return "f32";
    case frontend::ElementType::Double: return "f64";
  }
  return "f64";
}

std::string ref_str(const Module& m, const IrLabeledTensor& ref) {
  return "%" + m.tensor(ref.tensor).name + "[" + join(m.label_names(ref)) + "]";
}

}  // namespace

std::string print_ta(const Module& m) {
  std::ostringstream os;
  for (const auto& l : m.labels) {
    os << "%" << l.name << " = ta.index_label {begin = " << l.range.begin << ", end = " << l.range.end
       << ", increment = " << l.range.increment << "} : !ta.range\n";
  }
  for (const auto& t : m.tensors) {
    std::vector<std::string> dims;
    std::string shape;
    for (LabelId d : t.dims) {
      dims.push_back("%" + m.label(d).name);
      shape += std::to_string(m.label(d).range.extent()) + "x";
    }
    os << "%" << t.name << " = ta.tensor_decl(" << join(dims, ", ") << ") : tensor<" << shape
       << type_suffix(t.element_type) << ">\n";
  }
  for (const auto& op : m.ops) {
    const std::string mode = std::string(to_string(op.accumulate));
    if (const auto* fill = std::get_if<Fill>(&op.kind)) {
      os << "ta.fill " << ref_str(m, op.dest) << " {value = " << format_scalar(fill->value) << ", mode = " << mode
         << "}\n";
    } else if (const auto* copy = std::get_if<Copy>(&op.kind)) {
      const auto dst = m.label_names(op.dest);
      const auto src = m.label_names(copy->src);
      std::vector<std::string> perm;
      for (const auto& l : dst) {
        perm.push_back(std::to_string(std::find(src.begin(), src.end(), l) - src.begin()));
      }
      os << "ta.copy " << ref_str(m, op.dest) << " <- " << ref_str(m, copy->src)
         << " {alpha = " << format_scalar(copy->alpha) << ", perm = (" << join(perm) << "), mode = " << mode
         << "}\n";
    } else if (const auto* tc = std::get_if<TensorContract>(&op.kind)) {
      const auto spec = contraction_spec(m, op);
      const auto cls = classify_indices(spec.out_labels, spec.a_labels, spec.b_labels);
      os << "ta.tc " << ref_str(m, op.dest) << " <- " << ref_str(m, tc->lhs_in) << ", " << ref_str(m, tc->rhs_in)
         << " {alpha = " << format_scalar(tc->alpha) << ", free_a = [" << join(cls.free_a) << "], free_b = ["
         << join(cls.free_b) << "], contracted = [" << join(cls.contracted) << "], mode = " << mode << "}\n";
    } else if (const auto* mult = std::get_if<MultOp>(&op.kind)) {
      std::vector<std::string> refs;
      for (const auto& operand : mult->operands) refs.push_back(ref_str(m, operand));
      os << "%mult" << op.id.value << " = ta.mult " << join(refs, ", ") << " {alpha = " << format_scalar(mult->alpha)
         << "}\n";
    } else {
      const auto& set = std::get<Set>(op.kind);
      os << "ta.set " << ref_str(m, op.dest) << " <- %mult" << set.source.value << " {mode = " << mode << "}\n";
    }
  }
  return os.str();
}

}  // namespace tacc::ir
