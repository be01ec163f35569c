#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tacc/accel.hpp"
#include "tacc/driver.hpp"
#include "tacc/executor.hpp"
#include "tacc/planner.hpp"

namespace py = pybind11;
using namespace tacc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseTensor to_tensor(const Array& a) {
  std::vector<std::int64_t> ext(a.shape(), a.shape() + a.ndim());
  return DenseTensor(ext, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const DenseTensor& t) {
  Array out(std::vector<py::ssize_t>(t.extents().begin(), t.extents().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ir::Accumulate parse_mode(const std::string& mode) {
  if (mode == "=") return ir::Accumulate::Overwrite;
  if (mode == "+=") return ir::Accumulate::Add;
  if (mode == "-=") return ir::Accumulate::Subtract;
  throw Error(ErrorKind::InvalidConfig, "mode must be '=', '+=' or '-=', got '" + mode + "'");
}

/// Extents come from the operand shapes; the output takes them from A and B.
ir::ContractionSpec spec_for(const std::string& einsum, const Array& a, const Array& b, double alpha,
                             const std::string& mode) {
  const auto dash1 = einsum.find('-');
  const auto dash2 = einsum.find('-', dash1 == std::string::npos ? 0 : dash1 + 1);
  if (dash1 == std::string::npos || dash2 == std::string::npos) {
    throw Error(ErrorKind::SyntaxError, "contraction must look like 'out-a-b', got '" + einsum + "'");
  }
  const auto a_idx = einsum.substr(dash1 + 1, dash2 - dash1 - 1);
  const auto b_idx = einsum.substr(dash2 + 1);
  std::map<std::string, std::int64_t> ext;
  auto take = [&](const std::string& idx, const Array& x, const char* which) {
    if (static_cast<std::size_t>(x.ndim()) != idx.size()) {
      throw Error(ErrorKind::ShapeMismatch, std::string(which) + " has rank " + std::to_string(x.ndim()) +
                                                ", contraction expects " + std::to_string(idx.size()));
    }
    for (std::size_t d = 0; d < idx.size(); ++d) {
      const std::string l(1, idx[d]);
      const auto e = static_cast<std::int64_t>(x.shape(static_cast<py::ssize_t>(d)));
      auto [it, fresh] = ext.emplace(l, e);
      if (!fresh && it->second != e) {
        throw Error(ErrorKind::ShapeMismatch, "index " + l + " has extents " + std::to_string(it->second) +
                                                  " and " + std::to_string(e));
      }
    }
  };
  take(a_idx, a, "A");
  take(b_idx, b, "B");
  return ir::spec_from_einsum(einsum, ext, alpha, parse_mode(mode));
}

py::dict plan_dict(const planner::TTGTPlan& p) {
  py::dict d;
  d["perm_a"] = p.perm_a;
  d["perm_b"] = p.perm_b;
  d["perm_c"] = p.perm_c;
  d["swap"] = p.swap_operands;
  d["m"] = p.m;
  d["n"] = p.n;
  d["k"] = p.k;
  d["cost"] = p.cost;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tensor contraction compiler core";

  static py::exception<Error> error(m, "TaccError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("emit", [](const std::string& source, const std::string& stage) {
    return driver::emit(source, driver::parse_stage(stage));
  }, py::arg("source"), py::arg("stage") = "ta", "Compile DSL source and print one stage (ast, ta, plan, loops).");

  m.def("plan", [](const std::string& einsum, const std::map<std::string, std::int64_t>& extents) {
    return plan_dict(planner::select_ttgt(ir::spec_from_einsum(einsum, extents)));
  }, py::arg("contraction"), py::arg("extents"));

  m.def("variants", [](const std::string& einsum, const std::map<std::string, std::int64_t>& extents) {
    py::list out;
    for (const auto& p : planner::enumerate_ttgt_variants(ir::spec_from_einsum(einsum, extents))) {
      out.append(plan_dict(p));
    }
    return out;
  }, py::arg("contraction"), py::arg("extents"));

  m.def("flops", [](const std::string& einsum, const std::map<std::string, std::int64_t>& extents) {
    return ir::flop_count(ir::spec_from_einsum(einsum, extents));
  }, py::arg("contraction"), py::arg("extents"));

  m.def("contract", [](const std::string& einsum, const Array& a, const Array& b, double alpha,
                       std::optional<Array> c, const std::string& mode, bool naive, int workers) {
    const auto spec = spec_for(einsum, a, b, alpha, mode);
    if (spec.accumulate != ir::Accumulate::Overwrite && !c) {
      throw Error(ErrorKind::UninitializedTensor, "mode '" + mode + "' needs c");
    }
    const auto ta = to_tensor(a), tb = to_tensor(b);
    std::optional<DenseTensor> tc;
    if (c) tc = to_tensor(*c);
    const DenseTensor* c_in = tc ? &*tc : nullptr;
    DenseTensor result;
    {
      py::gil_scoped_release release;
      if (naive) {
        result = exec::naive_contract(spec, ta, tb, c_in);
      } else {
        const auto mk = exec::reference_microkernel();
        exec::ExecOptions opt;
        opt.workers = workers;
        result = exec::execute_ttgt(planner::select_ttgt(spec), spec, ta, tb, c_in, {}, *mk, opt).tensor;
      }
    }
    return to_array(result);
  }, py::arg("contraction"), py::arg("a"), py::arg("b"), py::arg("alpha") = 1.0, py::arg("c") = py::none(),
     py::arg("mode") = "=", py::arg("naive") = false, py::arg("workers") = 1,
     "Contract two arrays, e.g. contract('ik-ij-jk', A, B).");

  m.def("run", [](const std::string& source, const std::map<std::string, Array>& inputs,
                  std::optional<std::uint64_t> seed) {
    const auto module = driver::compile_source(source);
    std::map<std::string, DenseTensor> in;
    for (const auto& [name, arr] : inputs) in.emplace(name, to_tensor(arr));
    exec::ProgramOptions opt;
    if (seed) opt.initializer = exec::random_initializer(*seed);
    const auto mk = exec::reference_microkernel();
    exec::ProgramResult r;
    {
      py::gil_scoped_release release;
      r = exec::run_program(module, std::move(in), {}, *mk, opt);
    }
    py::dict out;
    for (const auto& [name, t] : r.tensors) out[py::str(name)] = to_array(t);
    return out;
  }, py::arg("source"), py::arg("inputs") = std::map<std::string, Array>{}, py::arg("seed") = py::none(),
     "Execute a DSL program; returns every tensor it holds at the end.");

  m.def("order", [](const std::vector<std::vector<std::string>>& operands, const std::vector<std::string>& out,
                    const std::map<std::string, std::int64_t>& extents) {
    std::vector<planner::Operand> ops;
    for (std::size_t i = 0; i < operands.size(); ++i) ops.push_back({"T" + std::to_string(i), operands[i]});
    const auto tree = planner::order_expression(ops, out, extents);
    return py::make_tuple(tree.encoding(), tree.total_flops);
  }, py::arg("operands"), py::arg("out"), py::arg("extents"),
     "Cheapest contraction order: (tree encoding, total flops).");

  m.def("codesign", [](const std::string& einsum, const std::map<std::string, std::int64_t>& extents,
                       double bandwidth) {
    const auto spec = ir::spec_from_einsum(einsum, extents);
    const auto report =
        accel::estimate_contraction(spec, planner::select_ttgt(spec), accel::builtin_accels(), bandwidth);
    py::list rows;
    for (const auto& e : report.per_accel) {
      py::dict d;
      d["accel"] = e.accel.name;
      d["microcalls"] = e.microcalls;
      d["est_cycles"] = e.est_cycles;
      d["est_seconds"] = e.est_seconds;
      d["transpose_seconds"] = e.transpose_seconds;
      d["bound"] = std::string(accel::to_string(e.bound));
      rows.append(d);
    }
    return py::make_tuple(rows, report.best);
  }, py::arg("contraction"), py::arg("extents"), py::arg("bandwidth") = accel::kDefaultBandwidth);
}
