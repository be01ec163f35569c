#include "tacc/accel.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tacc/error.hpp"

namespace tacc::accel {

using nlohmann::json;

std::vector<AccelSpec> builtin_accels() {
  return {
      AccelSpec{"16x16", 16, 131, 1e9, 5.077, 55827.0},
      AccelSpec{"64x64", 64, 1026, 1e9, 13.639, 224068.0},
      AccelSpec{"256x256", 256, 32770, 1e9, 73.7972, 4.097e6},
  };
}

namespace {

[[noreturn]] void schema_error(std::size_t index, const std::string& field, const std::string& what) {
  throw Error(ErrorKind::SchemaError, "accel[" + std::to_string(index) + "]." + field + ": " + what);
}

AccelSpec accel_from_json(const json& j, std::size_t index) {
  static const std::set<std::string> known = {"name", "tile", "cycles_per_call", "frequency_hz", "avg_power_mw",
                                              "area_um2"};
  if (!j.is_object()) throw Error(ErrorKind::SchemaError, "accel[" + std::to_string(index) + "] must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) schema_error(index, key, "unknown field");
  }
  AccelSpec spec;
  auto require = [&](const char* field) -> const json& {
    if (!j.contains(field)) schema_error(index, field, "missing required field");
    return j.at(field);
  };
  const json& name = require("name");
  if (!name.is_string() || name.get<std::string>().empty()) schema_error(index, "name", "expected a non-empty string");
  spec.name = name.get<std::string>();

  auto positive_int = [&](const char* field) {
    const json& v = require(field);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) schema_error(index, field, "expected an integer >= 1");
    return v.get<std::int64_t>();
  };
  spec.tile = positive_int("tile");
  spec.cycles_per_call = positive_int("cycles_per_call");

  auto number = [&](const char* field, double fallback, bool positive) {
    if (!j.contains(field)) return fallback;
    const json& v = j.at(field);
    if (!v.is_number()) schema_error(index, field, "expected a number");
    const double d = v.get<double>();
    if (positive ? !(d > 0) : !(d >= 0)) schema_error(index, field, positive ? "must be > 0" : "must be >= 0");
    return d;
  };
  spec.frequency_hz = number("frequency_hz", 1e9, true);
  spec.avg_power_mw = number("avg_power_mw", 0.0, false);
  spec.area_um2 = number("area_um2", 0.0, false);
  return spec;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// Shortest representation that reads back to the same double.
std::string num(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<AccelSpec> accels_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SchemaError, std::string("invalid JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("accels")) j = j.at("accels");
  if (!j.is_array()) throw Error(ErrorKind::SchemaError, "expected a list of accelerator specs");
  std::vector<AccelSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(accel_from_json(j[i], i));
  if (out.empty()) throw Error(ErrorKind::NonEmptyRequired, "accelerator list is empty");
  return out;
}

GemmEstimate estimate_gemm(std::int64_t m, std::int64_t n, std::int64_t k, const AccelSpec& accel) {
  if (m < 1 || n < 1 || k < 1) throw Error(ErrorKind::ShapeMismatch, "GEMM dimensions must be >= 1");
  if (accel.tile < 1 || accel.cycles_per_call < 1) throw Error(ErrorKind::InvalidConfig, "invalid accelerator spec");
  const std::int64_t t = accel.tile;
  GemmEstimate e;
  e.microcalls = ceil_div(m, t) * ceil_div(n, t) * ceil_div(k, t);
  e.cycles = e.microcalls * accel.cycles_per_call;
  return e;
}

std::string_view to_string(Bound bound) { return bound == Bound::Compute ? "compute" : "memory"; }

std::string_view to_string(Objective objective) {
  return objective == Objective::Perf ? "perf" : "perf_per_watt";
}

Objective parse_objective(std::string_view text) {
  if (text == "perf") return Objective::Perf;
  if (text == "perf_per_watt") return Objective::PerfPerWatt;
  throw Error(ErrorKind::InvalidConfig, "objective must be perf or perf_per_watt");
}

double AccelEstimate::score(Objective objective) const {
  return objective == Objective::Perf ? total_seconds() : total_seconds() * accel.avg_power_mw;
}

const AccelEstimate& CodesignReport::at(std::string_view name) const {
  for (const auto& e : per_accel) {
    if (e.accel.name == name) return e;
  }
  throw Error(ErrorKind::Internal, "no estimate for accelerator '" + std::string(name) + "'");
}

double transpose_seconds(const ir::ContractionSpec& spec, const planner::TTGTPlan& plan, double bandwidth) {
  if (!(bandwidth > 0)) throw Error(ErrorKind::InvalidConfig, "bandwidth must be > 0");
  auto bytes = [&](const std::vector<std::string>& labels) {
    double v = 8.0;
    for (auto e : spec.extents_of(labels)) v *= static_cast<double>(e);
    return v;
  };
  double s = 0.0;
  if (!plan.skip_a) s += 2.0 * bytes(spec.a_labels) / bandwidth;
  if (!plan.skip_b) s += 2.0 * bytes(spec.b_labels) / bandwidth;
  if (!plan.skip_c) s += 2.0 * bytes(spec.out_labels) / bandwidth;
  return s;
}

CodesignReport estimate_contraction(const ir::ContractionSpec& spec, const planner::TTGTPlan& plan,
                                    const std::vector<AccelSpec>& accels, double bandwidth, Objective objective) {
  if (accels.empty()) throw Error(ErrorKind::NonEmptyRequired, "accelerator list is empty");
  const double host = transpose_seconds(spec, plan, bandwidth);
  CodesignReport report;
  for (const auto& a : accels) {
    const GemmEstimate g = estimate_gemm(plan.m, plan.n, plan.k, a);
    AccelEstimate e;
    e.accel = a;
    e.est_cycles = g.cycles;
    e.microcalls = g.microcalls;
    e.est_seconds = static_cast<double>(g.cycles) / a.frequency_hz;
    e.transpose_seconds = host;
    e.bound = e.est_seconds >= host ? Bound::Compute : Bound::Memory;
    report.per_accel.push_back(e);
  }
  const AccelEstimate* best = &report.per_accel.front();
  for (const auto& e : report.per_accel) {
    if (e.score(objective) < best->score(objective)) best = &e;
  }
  report.best = best->accel.name;
  return report;
}

CodesignTable codesign_sweep(const std::vector<Workload>& workloads, const std::vector<AccelSpec>& accels,
                             double bandwidth, Objective objective) {
  if (workloads.empty()) throw Error(ErrorKind::NonEmptyRequired, "workload list is empty");
  if (accels.empty()) throw Error(ErrorKind::NonEmptyRequired, "accelerator list is empty");
  CodesignTable table;
  table.workloads = workloads;
  table.objective = objective;
  for (const auto& a : accels) table.totals.push_back(AccelTotal{a.name, 0.0, 0.0});
  for (const auto& w : workloads) {
    const auto plan = planner::select_ttgt(w.spec);
    table.reports.push_back(estimate_contraction(w.spec, plan, accels, bandwidth, objective));
    for (std::size_t i = 0; i < accels.size(); ++i) {
      const auto& e = table.reports.back().per_accel[i];
      table.totals[i].total_seconds += e.total_seconds();
      table.totals[i].score += e.score(objective);
    }
  }
  const AccelTotal* best = &table.totals.front();
  for (const auto& t : table.totals) {
    if (t.score < best->score) best = &t;
  }
  table.best = best->name;
  return table;
}

std::string to_csv(const CodesignTable& table) {
  std::ostringstream os;
  os << "workload,accel,tile,cycles_per_call,frequency_hz,microcalls,est_cycles,est_seconds,transpose_seconds,"
        "total_seconds,bound,avg_power_mw,area_um2,best\n";
  for (std::size_t w = 0; w < table.workloads.size(); ++w) {
    const auto& r = table.reports[w];
    for (const auto& e : r.per_accel) {
      os << table.workloads[w].name << ',' << e.accel.name << ',' << e.accel.tile << ',' << e.accel.cycles_per_call
         << ',' << num(e.accel.frequency_hz) << ',' << e.microcalls << ',' << e.est_cycles << ','
         << num(e.est_seconds) << ',' << num(e.transpose_seconds) << ',' << num(e.total_seconds()) << ','
         << to_string(e.bound) << ',' << num(e.accel.avg_power_mw) << ',' << num(e.accel.area_um2) << ','
         << (e.accel.name == r.best ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

std::string to_json(const CodesignTable& table) {
  json out;
  out["objective"] = std::string(to_string(table.objective));
  out["best"] = table.best;
  json rows = json::array();
  for (std::size_t w = 0; w < table.workloads.size(); ++w) {
    const auto& r = table.reports[w];
    json per = json::object();
    for (const auto& e : r.per_accel) {
      per[e.accel.name] = {{"est_seconds", e.est_seconds},
                           {"est_cycles", e.est_cycles},
                           {"microcalls", e.microcalls},
                           {"transpose_seconds", e.transpose_seconds},
                           {"total_seconds", e.total_seconds()},
                           {"bound", std::string(to_string(e.bound))},
                           {"avg_power_mw", e.accel.avg_power_mw},
                           {"area_um2", e.accel.area_um2}};
    }
    rows.push_back({{"workload", table.workloads[w].name},
                    {"contraction", ir::einsum_string(table.workloads[w].spec)},
                    {"per_accel", per},
                    {"best", r.best}});
  }
  out["workloads"] = rows;
  json totals = json::array();
  for (const auto& t : table.totals) {
    totals.push_back({{"accel", t.name}, {"total_seconds", t.total_seconds}, {"score", t.score}});
  }
  out["totals"] = totals;
  return out.dump(2);
}

}  // namespace tacc::accel
