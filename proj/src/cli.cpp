#include "qreg/cli.hpp"

#include "qreg/report.hpp"
#include "qreg/solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>
#include <unistd.h>

namespace qreg {

namespace {

int verdict_code(Overall o) {
  switch (o) {
    case Overall::Solvable: return kExitOk;
    case Overall::Unsolvable: return kExitUnsolvable;
    case Overall::Inconclusive: break;
  }
  return kExitInconclusive;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct Job {
  std::string path;
  RunResult result;
};

}  // namespace

Scenario apply_flags(Scenario s, const CliFlags& flags) {
  if (flags.horizon.size() == 1) {
    s.t_end = flags.horizon[0];
  } else if (flags.horizon.size() == 2) {
    s.t0 = flags.horizon[0];
    s.t_end = flags.horizon[1];
  } else if (!flags.horizon.empty()) {
    throw Error("--horizon: expected t_end or t0 t_end");
  }
  if (flags.step) s.step = *flags.step;
  if (flags.tol_res) s.tol_res = *flags.tol_res;
  if (flags.slope_tol) s.slope_tol = *flags.slope_tol;
  validate(s);
  return s;
}

namespace {

RunResult run_or_throw(const std::string& command, const Scenario& scenario, const CliFlags& flags) {
  RunResult res;
  if (command != "check" && command != "solve" && command != "simulate") {
    throw Error("unknown command \"" + command + "\" (expected check, solve or simulate)");
  }
  const Scenario s = apply_flags(scenario, flags);
  if (command == "simulate" && !s.omega0) throw Error("omega0 required");
  if (flags.format != "csv" && flags.format != "json") throw Error("--format: expected csv or json");

  const Generator gen = build_generator(s);
  const TimeGrid grid = scenario_grid(s, gen);
  PipelineOptions opts;
  if (s.tol_res) opts.solve.tol_res = *s.tol_res;
  if (s.tol_ode) opts.solve.tol_ode = *s.tol_ode;
  if (s.slope_tol) {
    opts.solve.slope_tol = *s.slope_tol;
    opts.nonresonance.slope_tol = *s.slope_tol;
  }
  opts.initial = s.initial;
  const SolvabilityReport rep = solvability_pipeline(s.plant, gen, grid, opts);
  res.exit_code = verdict_code(rep.overall);

  std::optional<SimTrace> trace;
  if (rep.solution) {
    if (command == "simulate") {
      trace = simulate_error_zeroing(s.plant, gen, *rep.solution, *s.omega0, grid);
      res.table_kind = "trace";
      res.table = flags.format == "csv" ? trace_csv(*trace) : trace_table_json(*trace);
    } else if (command == "solve") {
      res.table_kind = "solution";
      res.table = flags.format == "csv" ? solution_csv(*rep.solution) : solution_table_json(*rep.solution);
    }
  }
  res.report = report_json(s, rep, command, trace ? &*trace : nullptr);
  return res;
}

}  // namespace

RunResult run(const std::string& command, const Scenario& scenario, const CliFlags& flags) {
  try {
    return run_or_throw(command, scenario, flags);
  } catch (const std::exception& e) {
    RunResult res;
    res.exit_code = kExitError;
    res.error = e.what();
    return res;
  }
}

int run_paths(const std::string& command, const std::vector<std::string>& paths, const CliFlags& flags,
              std::ostream& out, std::ostream& err) {
  std::vector<Job> jobs(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) jobs[i].path = paths[i];

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        job.result = run_or_throw(command, load_scenario(job.path), flags);
        if (flags.output_dir) {
          const std::filesystem::path dir(*flags.output_dir);
          const std::string stem = std::filesystem::path(job.path).stem().string();
          write_atomic(dir / (stem + ".report.json"), job.result.report);
          if (!job.result.table.empty()) {
            write_atomic(dir / (stem + "." + job.result.table_kind + "." + flags.format), job.result.table);
          }
        }
      } catch (const std::exception& e) {
        job.result = RunResult{};
        job.result.exit_code = kExitError;
        job.result.error = e.what();
      }
    }
  };

  if (flags.output_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*flags.output_dir, ec);
    if (ec) {
      err << "qreg: cannot create " << *flags.output_dir << ": " << ec.message() << "\n";
      return kExitError;
    }
  }
  const std::size_t threads =
      std::min<std::size_t>(jobs.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = kExitOk;
  bool failed = false;
  for (const auto& job : jobs) {
    if (job.result.exit_code == kExitError) {
      failed = true;
      err << "qreg: " << job.path << ": " << job.result.error << "\n";
      continue;
    }
    code = std::max(code, job.result.exit_code);
    if (!flags.output_dir) {
      out << job.result.report;
      out << job.result.table;
    }
  }
  return failed ? kExitError : code;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Solvability checks and certified solutions for quasi-regulator equations", "qreg"};
  std::string command;
  std::vector<std::string> paths;
  CliFlags flags;
  std::string output;
  app.add_option("command", command, "check, solve or simulate")
      ->required()
      ->check(CLI::IsMember({"check", "solve", "simulate"}));
  app.add_option("scenarios", paths, "Scenario JSON files")->required()->check(CLI::ExistingFile);
  app.add_option("--horizon", flags.horizon, "t_end, or t0 t_end")->expected(1, 2);
  app.add_option("--step", flags.step, "Grid step")->check(CLI::PositiveNumber);
  app.add_option("--tol-res", flags.tol_res, "Algebraic residual tolerance")->check(CLI::PositiveNumber);
  app.add_option("--slope-tol", flags.slope_tol, "Growth slope tolerance")->check(CLI::PositiveNumber);
  app.add_option("--output", output, "Directory for report and sample files");
  app.add_option("--format", flags.format, "Sample table format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }
  if (!output.empty()) flags.output_dir = output;
  return run_paths(command, paths, flags, out, err);
}

}  // namespace qreg
