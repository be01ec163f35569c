#include "tacc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tacc/error.hpp"
#include "tacc/planner.hpp"

namespace tacc::bench {

using nlohmann::json;

namespace {

BenchCase case_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaError, "case must be an object");
  BenchCase bc;
  if (!j.contains("name") || !j["name"].is_string()) throw Error(ErrorKind::SchemaError, "name: expected a string");
  bc.name = j["name"].get<std::string>();
  if (!j.contains("contraction") || !j["contraction"].is_string()) {
    throw Error(ErrorKind::SchemaError, "contraction: expected an \"out-a-b\" string");
  }
  bc.contraction = j["contraction"].get<std::string>();

  std::int64_t fallback = 0;
  if (j.contains("extent")) {
    if (!j["extent"].is_number_integer()) throw Error(ErrorKind::SchemaError, "extent: expected an integer");
    fallback = j["extent"].get<std::int64_t>();
  }
  if (j.contains("extents")) {
    if (!j["extents"].is_object()) throw Error(ErrorKind::SchemaError, "extents: expected an object");
    for (const auto& [k, v] : j["extents"].items()) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
        throw Error(ErrorKind::SchemaError, "extents." + k + ": expected an integer >= 1");
      }
      bc.extents[k] = v.get<std::int64_t>();
    }
  }
  for (char ch : bc.contraction) {
    if (ch == '-') continue;
    const std::string idx(1, ch);
    if (!bc.extents.contains(idx)) {
      if (fallback < 1) throw Error(ErrorKind::SchemaError, "extents: no extent for index '" + idx + "'");
      bc.extents[idx] = fallback;
    }
  }
  if (j.contains("repeat")) {
    if (!j["repeat"].is_number_integer() || j["repeat"].get<int>() < 1) {
      throw Error(ErrorKind::SchemaError, "repeat: expected an integer >= 1");
    }
    bc.repeat = j["repeat"].get<int>();
  }
  bc.spec = ir::spec_from_einsum(bc.contraction, bc.extents);
  ir::classify_indices(bc.spec.out_labels, bc.spec.a_labels, bc.spec.b_labels);
  return bc;
}

json suite_cases(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SchemaError, std::string("invalid suite JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("cases")) j = j["cases"];
  if (!j.is_array()) throw Error(ErrorKind::SchemaError, "suite must be a list of cases");
  return j;
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::vector<SuiteEntry> parse_suite(std::string_view text) {
  const json cases = suite_cases(text);
  std::vector<SuiteEntry> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    SuiteEntry e;
    e.name = cases[i].is_object() && cases[i].contains("name") && cases[i]["name"].is_string()
                 ? cases[i]["name"].get<std::string>()
                 : "case" + std::to_string(i);
    try {
      e.bench = case_from_json(cases[i]);
    } catch (const Error& err) {
      e.error = err.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<accel::Workload> workloads_from_suite(std::string_view text) {
  std::vector<accel::Workload> out;
  for (const auto& e : parse_suite(text)) {
    if (!e.bench) throw Error(ErrorKind::SchemaError, "workload '" + e.name + "': " + e.error);
    out.push_back(accel::Workload{e.bench->name, e.bench->spec});
  }
  if (out.empty()) throw Error(ErrorKind::NonEmptyRequired, "workload list is empty");
  return out;
}

std::string_view to_string(Rung rung) {
  switch (rung) {
    case Rung::Naive: return "naive";
    case Rung::TtgtArbitraryPerm: return "ttgt-arbitrary-perm";
    case Rung::TtgtBestPerm: return "ttgt-best-perm";
    case Rung::TransposeOpt: return "+transpose-opt";
    case Rung::Tiling: return "+tiling";
    case Rung::Microkernel: return "+microkernel";
  }
  return "?";
}

BenchRow run_rung(const BenchCase& bc, Rung rung, const RunConfig& cfg, const BenchOptions& options) {
  BenchRow row;
  row.case_name = bc.name;
  row.rung = std::string(to_string(rung));
  row.repeat = options.repeat.value_or(bc.repeat);
  row.flops = ir::flop_count(bc.spec);
  if (row.repeat < 1) throw Error(ErrorKind::InvalidConfig, "repeat must be >= 1");

  const auto a = exec::random_initializer(options.seed)("A", bc.spec.extents_of(bc.spec.a_labels));
  const auto b = exec::random_initializer(options.seed)("B", bc.spec.extents_of(bc.spec.b_labels));

  const exec::ReferenceMicroKernel reference(cfg.tiling.mr, cfg.tiling.nr);
  const exec::ScalarMicroKernel scalar(cfg.tiling.mr, cfg.tiling.nr);
  exec::ExecOptions eo;
  eo.workers = cfg.workers;
  const exec::MicroKernel* mk = &reference;
  std::optional<planner::TTGTPlan> plan;
  switch (rung) {
    case Rung::Naive: break;
    case Rung::TtgtArbitraryPerm:
      plan = planner::enumerate_ttgt_variants(bc.spec).front();
      eo.transpose = exec::TransposeStrategy::Naive;
      eo.gemm = exec::GemmStrategy::Naive;
      break;
    case Rung::TtgtBestPerm:
      plan = planner::select_ttgt(bc.spec);
      eo.transpose = exec::TransposeStrategy::Naive;
      eo.gemm = exec::GemmStrategy::Naive;
      break;
    case Rung::TransposeOpt:
      plan = planner::select_ttgt(bc.spec);
      eo.gemm = exec::GemmStrategy::Naive;
      break;
    case Rung::Tiling:
      plan = planner::select_ttgt(bc.spec);
      mk = &scalar;
      break;
    case Rung::Microkernel: plan = planner::select_ttgt(bc.spec); break;
  }

  std::vector<double> times;
  DenseTensor result;
  for (int r = 0; r < row.repeat; ++r) {
    if (!plan) {
      const auto t0 = std::chrono::steady_clock::now();
      result = exec::naive_contract(bc.spec, a, b);
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      times.push_back(dt);
      row.per_stage["naive"] += dt / row.repeat;
    } else {
      auto out = exec::execute_ttgt(*plan, bc.spec, a, b, nullptr, cfg.tiling, *mk, eo);
      times.push_back(out.report.wall_time);
      for (const auto& [stage, s] : out.report.per_stage) row.per_stage[stage] += s / row.repeat;
      row.microkernel_calls = out.report.microkernel_calls;
      result = std::move(out.tensor);
    }
  }
  row.min_time = *std::min_element(times.begin(), times.end());
  double sum = 0.0;
  for (double t : times) sum += t;
  row.mean_time = sum / static_cast<double>(times.size());
  row.gflops = row.min_time > 0 ? static_cast<double>(row.flops) / row.min_time / 1e9 : 0.0;

  if (options.verify) {
    const DenseTensor ref = exec::naive_contract(bc.spec, a, b);
    std::int64_t k = 1;
    const auto cls = ir::classify_indices(bc.spec.out_labels, bc.spec.a_labels, bc.spec.b_labels);
    for (const auto& l : cls.contracted) k *= bc.spec.extent(l);
    row.rel_error = exec::relative_error(result, ref, bc.spec.alpha, a, b);
    row.ok = *row.rel_error <= 1e-12 * static_cast<double>(k);
    if (!row.ok) row.error = "relative error " + fmt(*row.rel_error) + " exceeds tolerance";
  }
  return row;
}

std::vector<BenchRow> run_case(const BenchCase& bc, const RunConfig& cfg, const BenchOptions& options) {
  std::vector<BenchRow> rows;
  if (!options.ablate) {
    rows.push_back(run_rung(bc, Rung::Microkernel, cfg, options));
    return rows;
  }
  for (Rung r : kLadder) rows.push_back(run_rung(bc, r, cfg, options));
  return rows;
}

namespace {

const char* const kStages[] = {"naive", "transpose_a", "transpose_b", "scale", "gemm", "transpose_c"};

std::string stage_value(const BenchRow& r, const char* stage) {
  auto it = r.per_stage.find(stage);
  return it == r.per_stage.end() ? "" : fmt(it->second, "%.9g");
}

}  // namespace

std::string rows_to_text(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-20s %6s %12s %12s %10s %10s %s\n", "case", "rung", "repeat", "min_s",
                "mean_s", "gflops", "rel_err", "status");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %-20s %6d %12.6g %12.6g %10.4f %10s %s\n", r.case_name.c_str(),
                  r.rung.c_str(), r.repeat, r.min_time, r.mean_time, r.gflops,
                  r.rel_error ? fmt(*r.rel_error, "%.2e").c_str() : "-", r.ok ? "ok" : r.error.c_str());
    os << line;
    std::string stages;
    for (const char* s : kStages) {
      if (r.per_stage.contains(s)) stages += std::string(stages.empty() ? "" : " ") + s + "=" + stage_value(r, s);
    }
    if (!stages.empty()) os << "    stages(mean s): " << stages << "\n";
  }
  return os.str();
}

std::string rows_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "case,rung,repeat,min_time,mean_time,flops,gflops,microkernel_calls,rel_error,ok";
  for (const char* s : kStages) os << ',' << s;
  os << '\n';
  for (const auto& r : rows) {
    os << r.case_name << ',' << r.rung << ',' << r.repeat << ',' << fmt(r.min_time, "%.9g") << ','
       << fmt(r.mean_time, "%.9g") << ',' << r.flops << ',' << fmt(r.gflops, "%.9g") << ',' << r.microkernel_calls
       << ',' << (r.rel_error ? fmt(*r.rel_error, "%.3e") : "") << ',' << (r.ok ? 1 : 0);
    for (const char* s : kStages) os << ',' << stage_value(r, s);
    os << '\n';
  }
  return os.str();
}

std::string rows_to_json(const std::vector<BenchRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = {{"case", r.case_name},   {"rung", r.rung},     {"repeat", r.repeat},
              {"min_time", r.min_time}, {"mean_time", r.mean_time}, {"flops", r.flops},
              {"gflops", r.gflops},     {"per_stage", r.per_stage}, {"microkernel_calls", r.microkernel_calls},
              {"ok", r.ok}};
    if (r.rel_error) j["rel_error"] = *r.rel_error;
    if (!r.error.empty()) j["error"] = r.error;
    out.push_back(j);
  }
  return out.dump(2);
}

}  // namespace tacc::bench
