#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tacc/error.hpp"
#include "tacc/frontend.hpp"

namespace tacc::ir {

// Strong handles into a Module's tables.
struct LabelId {
  std::uint32_t value = 0;
  auto operator<=>(const LabelId&) const = default;
};
struct TensorId {
  std::uint32_t value = 0;
  auto operator<=>(const TensorId&) const = default;
};
struct OpId {
  std::uint32_t value = 0;
  auto operator<=>(const OpId&) const = default;
};

struct Range {
  std::int64_t begin = 0;
  std::int64_t end = 1;
  std::int64_t increment = 1;

  /// ceil((end - begin) / increment)
  std::int64_t extent() const { return (end - begin + increment - 1) / increment; }
  bool operator==(const Range&) const = default;
};

struct IrIndexLabel {
  LabelId id;
  std::string name;
  Range range;
};

struct IrTensorDecl {
  TensorId id;
  std::string name;
  frontend::ElementType element_type = frontend::ElementType::Double;
  std::vector<LabelId> dims;
};

struct IrLabeledTensor {
  TensorId tensor;
  std::vector<LabelId> labels;
};

enum class Accumulate { Overwrite, Add, Subtract };

std::string_view to_string(Accumulate mode);

struct Fill {
  double value = 0.0;
};
struct Copy {
  double alpha = 1.0;
  IrLabeledTensor src;
};
struct TensorContract {
  double alpha = 1.0;
  IrLabeledTensor lhs_in;
  IrLabeledTensor rhs_in;
};
/// N-ary product; the contraction tree is chosen by the planner.
struct MultOp {
  std::vector<IrLabeledTensor> operands;
  double alpha = 1.0;
};
/// Assigns the result of a MultOp to `dest`.
struct Set {
  OpId source;
};

/// One IR operation. For Fill/Copy/TensorContract/Set `dest` is the written
/// tensor; for MultOp `dest` names the tensor the paired Set will write.
struct IrOp {
  OpId id;
  IrLabeledTensor dest;
  Accumulate accumulate = Accumulate::Overwrite;
  std::variant<Fill, Copy, TensorContract, MultOp, Set> kind;
  Span span;
};

struct Module {
  std::vector<IrIndexLabel> labels;
  std::vector<IrTensorDecl> tensors;
  std::vector<IrOp> ops;
  std::vector<std::string> warnings;

  LabelId add_label(std::string name, Range range);
  TensorId add_tensor(std::string name, std::vector<LabelId> dims,
                      frontend::ElementType type = frontend::ElementType::Double);
  OpId add_op(IrLabeledTensor dest, Accumulate mode, decltype(IrOp::kind) kind, Span span = {});

  const IrIndexLabel& label(LabelId id) const { return labels.at(id.value); }
  const IrTensorDecl& tensor(TensorId id) const { return tensors.at(id.value); }
  const IrOp& op(OpId id) const { return ops.at(id.value); }

  std::optional<TensorId> find_tensor(std::string_view name) const;
  std::optional<LabelId> find_label(std::string_view name) const;

  std::vector<std::int64_t> declared_extents(TensorId id) const;
  std::vector<std::string> label_names(const IrLabeledTensor& ref) const;
  /// True when any label's range differs from the declared dimension range.
  bool is_slice(const IrLabeledTensor& ref) const;
};

/// One binary contraction in index-name form.
struct ContractionSpec {
  std::vector<std::string> out_labels;
  std::vector<std::string> a_labels;
  std::vector<std::string> b_labels;
  std::map<std::string, std::int64_t> extents;
  double alpha = 1.0;
  Accumulate accumulate = Accumulate::Overwrite;

  std::int64_t extent(const std::string& label) const;
  std::vector<std::int64_t> extents_of(const std::vector<std::string>& labels) const;
};

/// Builds a spec from an einsum-style "out-a-b" string of single-character
/// indices, e.g. "abcd-aebf-dfce". Empty groups are allowed ("-i-i").
ContractionSpec spec_from_einsum(const std::string& contraction,
                                 const std::map<std::string, std::int64_t>& extents, double alpha = 1.0,
                                 Accumulate mode = Accumulate::Overwrite);
std::string einsum_string(const ContractionSpec& spec);

struct IndexClasses {
  std::vector<std::string> free_a;
  std::vector<std::string> free_b;
  std::vector<std::string> contracted;
};

/// Splits the indices of a binary contraction into free and contracted
/// groups. Throws InvalidIndexUsage for repeated indices within one operand,
/// output indices missing from both inputs, indices present in both inputs
/// and the output, and inputs-only indices appearing in just one operand.
IndexClasses classify_indices(const std::vector<std::string>& out, const std::vector<std::string>& a,
                              const std::vector<std::string>& b);

/// 2 * product of all index extents (multiply-add = 2 flops).
std::int64_t flop_count(const ContractionSpec& spec);

/// Checks the n-ary generalization: every index occurs exactly twice across
/// operands+output and never twice within one tensor.
void check_multi_operand(const std::vector<std::vector<std::string>>& operands,
                         const std::vector<std::string>& out);

struct Diagnostic {
  ErrorKind kind;
  OpId op;
  std::string message;
};

Module lower_ast(const frontend::SourceProgram& program);
std::vector<Diagnostic> validate(const Module& module);

/// Binary contraction spec for a TensorContract op.
ContractionSpec contraction_spec(const Module& module, const IrOp& op);

/// Stable text listing with `ta.*` mnemonics, one op per line.
std::string print_ta(const Module& module);

}  // namespace tacc::ir
