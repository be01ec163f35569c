#pragma once

#include <string>
#include <string_view>

#include "tacc/ir.hpp"
#include "tacc/loops.hpp"

namespace tacc::driver {

enum class Stage { Ast, Ta, Plan, Loops };

Stage parse_stage(std::string_view name);

/// Parses and lowers; throws the first diagnostic.
ir::Module compile_source(std::string_view source);

std::string emit_ast(std::string_view source);
std::string emit_ta(const ir::Module& module);
/// Per statement: contraction tree (multi-operand) and the chosen TTGT plan.
std::string emit_plan(const ir::Module& module);
/// Per contraction: the tiled transpose nests and the GEMM nest.
std::string emit_loops(const ir::Module& module, const loops::TilingConfig& cfg);

std::string emit(std::string_view source, Stage stage, const loops::TilingConfig& cfg = {});

/// JSON array, one entry per contraction statement, with tree, flops and per
/// binary step perm_a/perm_b/perm_c/swap/m/n/k/cost.
std::string plan_json(const ir::Module& module);

}  // namespace tacc::driver
