// tacc: compile, run, benchmark and co-design driver for tensor algebra programs.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tacc/accel.hpp"
#include "tacc/bench.hpp"
#include "tacc/config.hpp"
#include "tacc/driver.hpp"
#include "tacc/error.hpp"
#include "tacc/executor.hpp"
#include "tacc/tensor.hpp"

namespace {

using tacc::Error;
using tacc::ErrorKind;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitInternal = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for writing");
  out << text;
}

/// Prints the error, and for source errors the offending line with a caret.
void report(const Error& e, const std::string& path = {}, const std::string& source = {}) {
  std::cerr << (path.empty() ? "" : path + ":") << "error: " << e.what() << "\n";
  if (!e.span() || source.empty()) return;
  const auto& span = *e.span();
  std::size_t begin = 0;
  if (span.offset > 0) {
    const auto nl = source.rfind('\n', std::min(span.offset, source.size()) - 1);
    if (nl != std::string::npos) begin = nl + 1;
  }
  std::size_t end = source.find('\n', begin);
  if (end == std::string::npos) end = source.size();
  std::cerr << "  " << source.substr(begin, end - begin) << "\n  "
            << std::string(static_cast<std::size_t>(std::max(span.column - 1, 0)), ' ') << "^\n";
}

int exit_code(const Error& e) { return e.kind() == ErrorKind::Internal ? kExitInternal : kExitUser; }

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> tiles;
  int workers = 0;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "Tiling config file (key = value); default $TACC_CONFIG");
    app->add_option("--tile", tiles, "Override a config key, e.g. --tile mc=128 --tile kc=64");
    app->add_option("--workers", workers, "Worker threads for GEMM and transposes")->check(CLI::PositiveNumber);
  }

  tacc::RunConfig resolve() const {
    std::optional<std::filesystem::path> path;
    if (!config_path.empty()) path = config_path;
    auto overrides = tiles;
    if (workers > 0) overrides.push_back("workers=" + std::to_string(workers));
    return tacc::load_config(path, overrides);
  }
};

// ---------------------------------------------------------------------------
// compile

struct CompileArgs {
  std::string file;
  std::string emit = "ta";
  std::string dump_plan;
  ConfigFlags cfg;
};

int cmd_compile(const CompileArgs& args) {
  const std::string source = read_file(args.file);
  try {
    const auto stage = tacc::driver::parse_stage(args.emit);
    const auto cfg = args.cfg.resolve();
    std::cout << tacc::driver::emit(source, stage, cfg.tiling);
    if (!args.dump_plan.empty()) {
      const std::string js = tacc::driver::plan_json(tacc::driver::compile_source(source)) + "\n";
      if (args.dump_plan == "-") {
        std::cout << js;
      } else {
        write_file(args.dump_plan, js);
      }
    }
  } catch (const Error& e) {
    report(e, args.file, source);
    return exit_code(e);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string file;
  std::string init;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  bool verify = false;
  bool json_out = false;
  ConfigFlags cfg;
};

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* what) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw Error(ErrorKind::InvalidConfig, std::string(what) + " must be NAME=path, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

tacc::exec::Initializer parse_init(const std::string& spec) {
  if (spec.empty()) return {};
  const auto colon = spec.find(':');
  const std::string mode = spec.substr(0, colon);
  const std::string value = colon == std::string::npos ? "" : spec.substr(colon + 1);
  try {
    std::size_t used = 0;
    if (mode == "random") {
      const auto seed = std::stoull(value, &used);
      if (used == value.size()) return tacc::exec::random_initializer(seed);
    } else if (mode == "const") {
      const double v = std::stod(value, &used);
      if (used == value.size()) return tacc::exec::const_initializer(v);
    }
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidConfig, "--init expects random:<seed> or const:<value>, got '" + spec + "'");
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json report_json(const tacc::exec::ExecutionReport& r) {
  return {{"wall_time", r.wall_time},
          {"flops", r.flops},
          {"gflops", r.gflops},
          {"per_stage", r.per_stage},
          {"microkernel_calls", r.microkernel_calls}};
}

int cmd_run(const RunArgs& args) {
  const std::string source = read_file(args.file);
  tacc::ir::Module module;
  try {
    module = tacc::driver::compile_source(source);
  } catch (const Error& e) {
    report(e, args.file, source);
    return exit_code(e);
  }

  const auto cfg = args.cfg.resolve();
  std::map<std::string, tacc::DenseTensor> inputs;
  for (const auto& in : args.inputs) {
    const auto [name, path] = split_assignment(in, "--input");
    inputs[name] = tacc::read_dtns(path);
  }
  std::vector<std::pair<std::string, std::string>> outputs;
  for (const auto& out : args.outputs) {
    auto pair = split_assignment(out, "--output");
    if (!module.find_tensor(pair.first)) {
      throw Error(ErrorKind::UndeclaredIdentifier, "--output names unknown tensor '" + pair.first + "'");
    }
    outputs.push_back(std::move(pair));
  }

  const tacc::exec::ReferenceMicroKernel mk(cfg.tiling.mr, cfg.tiling.nr);
  tacc::exec::ProgramOptions opts;
  opts.exec.workers = cfg.workers;
  opts.initializer = parse_init(args.init);
  const auto result = tacc::exec::run_program(module, inputs, cfg.tiling, mk, opts);

  for (const auto& [name, path] : outputs) {
    auto it = result.tensors.find(name);
    if (it == result.tensors.end()) {
      throw Error(ErrorKind::UninitializedTensor, "tensor '" + name + "' is never written");
    }
    tacc::write_dtns(path, it->second);
  }

  std::optional<double> max_rel;
  bool verified = true;
  if (args.verify) {
    auto oracle_opts = opts;
    oracle_opts.naive_oracle = true;
    const auto ref = tacc::exec::run_program(module, inputs, cfg.tiling, mk, oracle_opts);
    // Tolerance scales with the largest contracted volume in the program.
    double k = 1.0;
    for (const auto& s : result.steps) {
      if (s.plan) k = std::max(k, static_cast<double>(s.plan->k));
    }
    max_rel = 0.0;
    for (const auto& [name, t] : ref.tensors) {
      const auto& got = result.tensors.at(name);
      const double scale = tacc::max_abs(t);
      const double diff = tacc::max_abs_diff(got, t);
      max_rel = std::max(*max_rel, scale > 0 ? diff / scale : diff);
    }
    verified = *max_rel <= 1e-12 * k;
  }

  if (args.json_out) {
    json j;
    json steps = json::array();
    for (const auto& s : result.steps) {
      json js = {{"statement", s.description}, {"report", report_json(s.report)}};
      if (s.plan) {
        js["plan"] = {{"swap", s.plan->swap_operands}, {"m", s.plan->m},           {"n", s.plan->n},
                      {"k", s.plan->k},                {"perm_a", s.plan->perm_a}, {"perm_b", s.plan->perm_b},
                      {"perm_c", s.plan->perm_c},      {"cost", s.plan->cost}};
      }
      steps.push_back(js);
    }
    j["steps"] = steps;
    json tensors = json::object();
    for (const auto& [name, t] : result.tensors) {
      double sum = 0.0;
      for (double v : t.data()) sum += v;
      tensors[name] = {{"extents", t.extents()}, {"sum", sum}, {"max_abs", tacc::max_abs(t)}};
    }
    j["tensors"] = tensors;
    if (max_rel) {
      j["verify"] = {{"max_rel_error", *max_rel}, {"ok", verified}};
    }
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& s : result.steps) {
      const auto& r = s.report;
      std::cout << s.description << "\n  time=" << fmt(r.wall_time) << "s flops=" << r.flops
                << " gflops=" << fmt(r.gflops, "%.4f");
      if (r.microkernel_calls) std::cout << " microkernel_calls=" << r.microkernel_calls;
      std::cout << "\n";
      if (!r.per_stage.empty()) {
        std::cout << "  stages:";
        for (const auto& [stage, sec] : r.per_stage) std::cout << " " << stage << "=" << fmt(sec) << "s";
        std::cout << "\n";
      }
    }
    for (const auto& [name, t] : result.tensors) {
      double sum = 0.0;
      for (double v : t.data()) sum += v;
      std::cout << "tensor " << name << " extents=(";
      for (std::size_t i = 0; i < t.rank(); ++i) std::cout << (i ? "," : "") << t.extents()[i];
      std::cout << ") sum=" << fmt(sum, "%.17g") << "\n";
    }
    if (max_rel) {
      std::cout << "verify: max relative error " << fmt(*max_rel, "%.3e") << (verified ? " (ok)" : " (FAILED)")
                << "\n";
    }
  }
  return verified ? kExitOk : kExitInternal;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string suite;
  bool ablate = false;
  bool verify = false;
  int repeat = 0;
  std::string csv;
  bool json_out = false;
  std::uint64_t seed = 42;
  ConfigFlags cfg;
};

int cmd_bench(const BenchArgs& args) {
  const auto entries = tacc::bench::parse_suite(read_file(args.suite));
  const auto cfg = args.cfg.resolve();
  tacc::bench::BenchOptions opts;
  opts.ablate = args.ablate;
  opts.verify = args.verify;
  opts.seed = args.seed;
  if (args.repeat > 0) opts.repeat = args.repeat;

  std::vector<tacc::bench::BenchRow> rows;
  bool malformed = false;
  bool failed = false;
  for (const auto& e : entries) {
    if (!e.bench) {
      std::cerr << "case '" << e.name << "': error: " << e.error << "\n";
      malformed = true;
      continue;
    }
    try {
      auto case_rows = tacc::bench::run_case(*e.bench, cfg, opts);
      for (const auto& r : case_rows) failed = failed || !r.ok;
      rows.insert(rows.end(), case_rows.begin(), case_rows.end());
    } catch (const Error& err) {
      std::cerr << "case '" << e.name << "': error: " << err.what() << "\n";
      malformed = true;
    }
  }
  std::cout << (args.json_out ? tacc::bench::rows_to_json(rows) + "\n" : tacc::bench::rows_to_text(rows));
  if (!args.csv.empty()) write_file(args.csv, tacc::bench::rows_to_csv(rows));
  if (failed) return kExitInternal;
  return malformed ? kExitUser : kExitOk;
}

// ---------------------------------------------------------------------------
// codesign

struct CodesignArgs {
  std::string accels;
  std::string workloads;
  double bandwidth = tacc::accel::kDefaultBandwidth;
  std::string out;
  std::string json_path;
  std::string objective = "perf";
};

int cmd_codesign(const CodesignArgs& args) {
  const auto accels =
      args.accels.empty() ? tacc::accel::builtin_accels() : tacc::accel::accels_from_json(read_file(args.accels));
  const auto workloads = tacc::bench::workloads_from_suite(read_file(args.workloads));
  const auto table = tacc::accel::codesign_sweep(workloads, accels, args.bandwidth,
                                                 tacc::accel::parse_objective(args.objective));
  const std::string csv = tacc::accel::to_csv(table);
  if (args.out.empty()) {
    std::cout << csv;
  } else {
    write_file(args.out, csv);
    for (std::size_t w = 0; w < table.workloads.size(); ++w) {
      std::cout << table.workloads[w].name << ": best " << table.reports[w].best << "\n";
    }
    for (const auto& t : table.totals) std::cout << "total " << t.name << " " << fmt(t.total_seconds) << "s\n";
    std::cout << "best overall: " << table.best << "\n";
  }
  if (!args.json_path.empty()) write_file(args.json_path, tacc::accel::to_json(table) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor algebra compiler: compile, run, bench and codesign"};
  app.require_subcommand(1);

  CompileArgs compile;
  auto* c = app.add_subcommand("compile", "Lower a program and print one stage");
  c->add_option("file", compile.file, "Program source")->required();
  c->add_option("--emit", compile.emit, "Stage to print: ast, ta, plan, loops")
      ->check(CLI::IsMember({"ast", "ta", "plan", "loops"}));
  c->add_option("--dump-plan", compile.dump_plan, "Write the plan as JSON to a file ('-' for stdout)");
  compile.cfg.add(c);

  RunArgs run;
  auto* r = app.add_subcommand("run", "Execute a program");
  r->add_option("file", run.file, "Program source")->required();
  r->add_option("--init", run.init, "Values for unset inputs: random:<seed> or const:<value>");
  r->add_option("--input", run.inputs, "NAME=path of a DTNS tensor");
  r->add_option("--output", run.outputs, "NAME=path to write a result tensor");
  r->add_flag("--verify", run.verify, "Compare against the naive loop-nest oracle");
  r->add_flag("--json", run.json_out, "Print the report as JSON");
  run.cfg.add(r);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time the contractions of a suite");
  b->add_option("suite", bench.suite, "Suite JSON")->required();
  b->add_flag("--ablate", bench.ablate, "Run the optimization ladder");
  b->add_flag("--verify", bench.verify, "Check each result against the naive oracle");
  b->add_option("--repeat", bench.repeat, "Runs per case (overrides the suite)")->check(CLI::PositiveNumber);
  b->add_option("--csv", bench.csv, "Also write rows as CSV");
  b->add_flag("--json", bench.json_out, "Print rows as JSON");
  b->add_option("--seed", bench.seed, "Seed for the random operands");
  bench.cfg.add(b);

  CodesignArgs codesign;
  auto* d = app.add_subcommand("codesign", "Estimate workloads on modeled GEMM accelerators");
  d->add_option("--accels", codesign.accels, "Accelerator JSON (default: the three built-in designs)");
  d->add_option("--workloads", codesign.workloads, "Suite JSON of contractions")->required();
  d->add_option("--bandwidth", codesign.bandwidth, "Host bandwidth in bytes/s for transposes")
      ->check(CLI::PositiveNumber);
  d->add_option("--out", codesign.out, "CSV report path (default stdout)");
  d->add_option("--json", codesign.json_path, "Also write a JSON report");
  d->add_option("--objective", codesign.objective, "perf or perf_per_watt")
      ->check(CLI::IsMember({"perf", "perf_per_watt"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*c) return cmd_compile(compile);
    if (*r) return cmd_run(run);
    if (*b) return cmd_bench(bench);
    if (*d) return cmd_codesign(codesign);
  } catch (const Error& e) {
    report(e);
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUser;
}
