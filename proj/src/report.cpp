#include "qreg/report.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>

namespace qreg {

using ordered = nlohmann::ordered_json;

namespace {

ordered matrix_json(const Matrix& m) {
  ordered rows = ordered::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered row = ordered::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

ordered complex_list(const std::vector<std::complex<double>>& zs) {
  ordered out = ordered::array();
  for (const auto& z : zs) out.push_back({z.real(), z.imag()});
  return out;
}

ordered growth_json(const GrowthFit& g) {
  ordered j;
  j["sup"] = g.sup;
  j["slope"] = g.slope;
  j["monotone"] = g.monotone;
  j["finite"] = g.finite;
  j["window_sups"] = g.window_sups;
  return j;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<double> times;
  std::vector<SampleTag> tags;
  std::vector<std::vector<double>> values;
};

Table solution_table(const RegulatorSolution& sol) {
  Table t;
  t.columns = {"t", "side"};
  const Eigen::Index n = sol.Pi_x.empty() ? 0 : sol.Pi_x[0].rows();
  const Eigen::Index nu = sol.Pi_x.empty() ? 0 : sol.Pi_x[0].cols();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < nu; ++j) t.columns.push_back("Pi_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < nu; ++j) t.columns.push_back("Delta_" + std::to_string(j + 1));
  for (std::size_t k = 0; k < sol.samples.size(); ++k) {
    t.times.push_back(sol.samples[k].t);
    t.tags.push_back(sol.samples[k].tag);
    std::vector<double> row;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < nu; ++j) row.push_back(sol.Pi_x[k](i, j));
    for (Eigen::Index j = 0; j < nu; ++j) row.push_back(sol.Delta[k](0, j));
    t.values.push_back(std::move(row));
  }
  return t;
}

Table trace_table(const SimTrace& tr) {
  Table t;
  t.columns = {"t", "side", "e"};
  const Eigen::Index n = tr.x.empty() ? 0 : tr.x[0].size();
  const Eigen::Index nu = tr.omega.empty() ? 0 : tr.omega[0].size();
  for (Eigen::Index i = 0; i < n; ++i) t.columns.push_back("x_" + std::to_string(i + 1));
  t.columns.push_back("u");
  for (Eigen::Index i = 0; i < nu; ++i) t.columns.push_back("omega_" + std::to_string(i + 1));
  for (std::size_t k = 0; k < tr.samples.size(); ++k) {
    t.times.push_back(tr.samples[k].t);
    t.tags.push_back(tr.samples[k].tag);
    std::vector<double> row{tr.e[k]};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(tr.x[k](i));
    row.push_back(tr.u[k]);
    for (Eigen::Index i = 0; i < nu; ++i) row.push_back(tr.omega[k](i));
    t.values.push_back(std::move(row));
  }
  return t;
}

std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) out += (c ? "," : "") + t.columns[c];
  out += '\n';
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    out += format_number(t.times[k]);
    out += ',';
    out += tag_symbol(t.tags[k]);
    for (double v : t.values[k]) {
      out += ',';
      out += format_number(v);
    }
    out += '\n';
  }
  return out;
}

std::string to_table_json(const Table& t) {
  ordered j;
  j["columns"] = t.columns;
  ordered rows = ordered::array();
  for (std::size_t k = 0; k < t.times.size(); ++k) {
    ordered row = ordered::array();
    row.push_back(t.times[k]);
    row.push_back(tag_symbol(t.tags[k]));
    for (double v : t.values[k]) row.push_back(v);
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump() + "\n";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string report_json(const Scenario& scenario, const SolvabilityReport& rep, const std::string& command,
                        const SimTrace* trace) {
  ordered j;
  j["scenario"] = scenario.name;
  j["command"] = command;
  j["overall"] = overall_name(rep.overall);
  j["reason"] = rep.overall == Overall::Unsolvable ? ordered(reason_label(rep.reason)) : ordered(nullptr);
  j["explanation"] = rep.explanation;
  j["horizon"] = {scenario.t0, scenario.t_end};
  j["step"] = scenario.step;

  ordered plant;
  plant["n"] = scenario.plant.n();
  plant["nu"] = scenario.plant.nu();
  plant["D"] = scenario.plant.D;
  plant["relative_degree"] = rep.relative_degree;
  plant["zeros"] = complex_list(rep.zeros);
  plant["minimum_phase"] = rep.minimum_phase;
  j["plant"] = plant;

  const auto& a1 = rep.assumption1;
  ordered a;
  a["passed"] = a1.passed;
  a["nonsingular"] = a1.nonsingular;
  a["min_det"] = a1.min_det;
  a["finite_time_bounded"] = a1.finite_time_bounded;
  a["max_norm"] = a1.max_norm;
  a["uniform_ratio_bound"] = a1.uniform_ratio_bound;
  a["probe_step"] = a1.probe_step;
  a["probe_points"] = a1.probe_points;
  a["pair_count"] = a1.pair_count;
  a["message"] = a1.message;
  j["assumption1"] = a;

  if (rep.profile) {
    const auto& p = *rep.profile;
    ordered s;
    ordered degrees = ordered::array();
    for (const auto& d : p.degrees) degrees.push_back(d.str());
    s["degrees"] = degrees;
    s["mismatches"] = p.mismatches;
    s["jstar"] = p.jstar.str();
    s["exact_jets"] = p.exact_jets;
    s["qlambda_continuous"] = p.qlambda_continuous;
    s["lipschitz_QLambda"] = p.lipschitz_QLambda;
    s["lipschitz_quotients"] = {p.lipschitz_quotients[0], p.lipschitz_quotients[1], p.lipschitz_quotients[2]};
    s["assumption2"] = p.assumption2;
    s["qlambda_bound"] = p.qlambda_bound;
    s["cancellation_warning"] = p.cancellation_warning;
    if (rep.rd_necessity) s["relative_degree_necessity"] = necessity_name(*rep.rd_necessity);
    j["smoothness"] = s;
  }

  if (rep.nonresonance) {
    const auto& nr = *rep.nonresonance;
    ordered o;
    o["verdict"] = verdict_name(nr.verdict);
    o["zero_dynamics"] = matrix_json(nr.az);
    ordered cands = ordered::array();
    for (const auto& c : nr.candidates) {
      ordered cj;
      cj["name"] = c.name;
      cj["available"] = c.available;
      cj["bounded"] = c.bounded;
      cj["growing"] = c.growing;
      cj["note"] = c.note;
      if (c.available) cj["growth"] = growth_json(c.fit);
      cands.push_back(cj);
    }
    o["candidates"] = cands;
    o["winner"] = nr.winner >= 0 ? ordered(nr.candidates[static_cast<std::size_t>(nr.winner)].name) : ordered(nullptr);
    o["minimum_phase_shortcut"] = nr.minimum_phase_shortcut;
    if (nr.bound) {
      ordered b;
      b["alpha"] = nr.bound->alpha;
      b["beta"] = nr.bound->beta;
      b["h"] = nr.bound->h;
      b["bound"] = nr.bound->bound;
      b["measured"] = nr.bound->measured;
      o["bound"] = b;
    }
    if (nr.classical) o["classical"] = *nr.classical;
    if (nr.classical_agrees) o["classical_agrees"] = *nr.classical_agrees;
    o["note"] = nr.note;
    j["nonresonance"] = o;
  }

  if (rep.solution) {
    const auto& s = *rep.solution;
    ordered sj;
    sj["construction"] = s.construction;
    sj["dichotomy"] = s.dichotomy;
    sj["certified"] = s.certified;
    sj["failure"] = s.failure;
    sj["initial"] = matrix_json(s.initial);
    sj["max_residual"] = s.max_residual;
    sj["max_residual_all"] = s.max_residual_all;
    sj["ode_residual"] = s.ode_residual;
    sj["sup_Pi"] = s.sup_Pi;
    sj["sup_Delta"] = s.sup_Delta;
    sj["growth"] = growth_json(s.growth);
    sj["samples"] = s.samples.size();
    j["solution"] = sj;
  }

  if (trace) {
    ordered t;
    t["omega0"] = scenario.omega0 ? ordered(std::vector<double>(scenario.omega0->data(), scenario.omega0->data() +
                                                                                          scenario.omega0->size()))
                                  : ordered(nullptr);
    t["max_abs_error"] = trace->max_abs_error(false);
    t["max_abs_error_all"] = trace->max_abs_error(true);
    t["samples"] = trace->samples.size();
    j["simulation"] = t;
  }
  return j.dump(2) + "\n";
}

std::string solution_csv(const RegulatorSolution& sol) { return to_csv(solution_table(sol)); }
std::string trace_csv(const SimTrace& trace) { return to_csv(trace_table(trace)); }
std::string solution_table_json(const RegulatorSolution& sol) { return to_table_json(solution_table(sol)); }
std::string trace_table_json(const SimTrace& trace) { return to_table_json(trace_table(trace)); }

}  // namespace qreg
