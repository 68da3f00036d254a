#include "qreg/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace qreg {

using nlohmann::json;

namespace {

// LTV caches cover the longest backward sweep of the non-resonance test.
constexpr double kLtvMargin = 205.0;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw Error(path + ": " + what); }

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

std::vector<double> number_list(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// Row-major nested arrays. A flat array is read as a single row.
Matrix matrix(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a matrix (array of rows)");
  if (j.empty()) return Matrix(0, 0);
  if (!j[0].is_array()) {
    const auto row = number_list(j, path);
    return Eigen::Map<const Matrix>(row.data(), 1, static_cast<Eigen::Index>(row.size()));
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    const auto row = number_list(j[static_cast<std::size_t>(r)], rp);
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      fail(rp, "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

// Column vector from a flat array or an n x 1 nested array.
Matrix column(const json& j, const std::string& path) {
  if (j.is_array() && !j.empty() && !j[0].is_array()) {
    const auto v = number_list(j, path);
    return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(v.size()), 1);
  }
  return matrix(j, path);
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json flat_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(path.empty() ? key : path + "." + key, "missing");
  return j.at(key);
}

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

GeneratorSpec parse_generator(const json& j) {
  const std::string p = "generator";
  if (!j.is_object()) fail(p, "expected an object");
  GeneratorSpec g;
  const json& kind = require(j, "kind", p);
  if (!kind.is_string()) fail(p + ".kind", "expected a string");
  g.kind = kind.get<std::string>();
  const auto& kinds = supported_generator_kinds();
  if (std::find(kinds.begin(), kinds.end(), g.kind) == kinds.end()) {
    std::string list;
    for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
    fail(p + ".kind", "unknown kind \"" + g.kind + "\" (supported: " + list + ")");
  }
  auto num = [&](const char* key) { return number(require(j, key, p), join(p, key)); };
  if (g.kind == "lti") {
    g.S = matrix(require(j, "S", p), p + ".S");
  } else if (g.kind == "sawtooth" || g.kind == "triangular") {
    g.period = num("period");
    g.amplitude = num("amplitude");
  } else if (g.kind == "square") {
    g.period = num("period");
    g.duty = num("duty");
    g.low = num("low");
    g.high = num("high");
  } else if (g.kind == "pwm") {
    g.period = num("period");
    g.duties = number_list(require(j, "duties", p), p + ".duties");
    g.amplitude = j.contains("amplitude") ? num("amplitude") : 1.0;
  } else if (g.kind == "ltv-sampled") {
    g.times = number_list(require(j, "times", p), p + ".times");
    const json& smp = require(j, "samples", p);
    if (!smp.is_array()) fail(p + ".samples", "expected an array of matrices");
    for (std::size_t i = 0; i < smp.size(); ++i) {
      g.samples.push_back(matrix(smp[i], p + ".samples[" + std::to_string(i) + "]"));
    }
    if (j.contains("interpolation")) {
      if (!j["interpolation"].is_string()) fail(p + ".interpolation", "expected \"hold\" or \"linear\"");
      g.interpolation = j["interpolation"].get<std::string>();
    }
    if (j.contains("breakpoints")) g.breakpoints = number_list(j["breakpoints"], p + ".breakpoints");
  } else {
    if (j.contains("breakpoints")) g.breakpoints = number_list(j["breakpoints"], p + ".breakpoints");
    if (j.contains("period")) g.piece_period = num("period");
    const json& segs = require(j, "segments", p);
    if (!segs.is_array()) fail(p + ".segments", "expected an array of coefficient lists");
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const std::string sp = p + ".segments[" + std::to_string(k) + "]";
      if (!segs[k].is_array()) fail(sp, "expected an array of coefficient matrices");
      std::vector<Matrix> coeffs;
      for (std::size_t d = 0; d < segs[k].size(); ++d) {
        coeffs.push_back(matrix(segs[k][d], sp + "[" + std::to_string(d) + "]"));
      }
      g.segments.push_back(std::move(coeffs));
    }
  }
  return g;
}

json generator_json(const GeneratorSpec& g) {
  json j;
  j["kind"] = g.kind;
  if (g.kind == "lti") {
    j["S"] = to_json(g.S);
  } else if (g.kind == "sawtooth" || g.kind == "triangular") {
    j["period"] = g.period;
    j["amplitude"] = g.amplitude;
  } else if (g.kind == "square") {
    j["period"] = g.period;
    j["duty"] = g.duty;
    j["low"] = g.low;
    j["high"] = g.high;
  } else if (g.kind == "pwm") {
    j["period"] = g.period;
    j["duties"] = g.duties;
    j["amplitude"] = g.amplitude;
  } else if (g.kind == "ltv-sampled") {
    j["times"] = g.times;
    json smp = json::array();
    for (const auto& m : g.samples) smp.push_back(to_json(m));
    j["samples"] = smp;
    j["interpolation"] = g.interpolation;
    j["breakpoints"] = g.breakpoints;
  } else {
    j["breakpoints"] = g.breakpoints;
    if (g.piece_period) j["period"] = *g.piece_period;
    json segs = json::array();
    for (const auto& seg : g.segments) {
      json coeffs = json::array();
      for (const auto& m : seg) coeffs.push_back(to_json(m));
      segs.push_back(coeffs);
    }
    j["segments"] = segs;
  }
  return j;
}

json scenario_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  json p;
  p["A"] = to_json(s.plant.A);
  p["B"] = flat_json(s.plant.B);
  p["C"] = flat_json(s.plant.C);
  p["D"] = s.plant.D;
  p["P"] = to_json(s.plant.P);
  p["Q"] = flat_json(s.plant.Q);
  j["plant"] = p;
  j["generator"] = generator_json(s.generator);
  j["horizon"] = {s.t0, s.t_end};
  j["step"] = s.step;
  json tol = json::object();
  if (s.tol_res) tol["tol_res"] = *s.tol_res;
  if (s.tol_ode) tol["tol_ode"] = *s.tol_ode;
  if (s.slope_tol) tol["slope_tol"] = *s.slope_tol;
  if (!tol.empty()) j["tolerances"] = tol;
  if (s.omega0) j["omega0"] = flat_json(*s.omega0);
  if (s.initial) j["initial"] = to_json(*s.initial);
  return j;
}

std::size_t generator_dimension(const GeneratorSpec& g) {
  if (g.kind == "lti") return static_cast<std::size_t>(g.S.rows());
  if (g.kind == "ltv-sampled") return g.samples.empty() ? 0 : static_cast<std::size_t>(g.samples[0].rows());
  if (g.kind == "custom-piecewise") {
    return g.segments.empty() || g.segments[0].empty() ? 0 : static_cast<std::size_t>(g.segments[0][0].rows());
  }
  return 2;
}

void check_square(const Matrix& m, Eigen::Index nu, const std::string& path) {
  if (m.rows() != nu || m.cols() != nu) {
    std::ostringstream msg;
    msg << "expected " << nu << "x" << nu << ", got " << m.rows() << "x" << m.cols();
    fail(path, msg.str());
  }
  if (!all_finite(m)) fail(path, "entries must be finite");
}

void validate_generator(const GeneratorSpec& g, Eigen::Index nu, double t0) {
  const std::string p = "generator";
  if (g.kind == "lti") {
    check_square(g.S, nu, p + ".S");
  } else if (g.kind == "sawtooth" || g.kind == "triangular" || g.kind == "square" || g.kind == "pwm") {
    if (nu != 2) fail("plant.P", "carrier generators have dimension 2, P has " + std::to_string(nu) + " columns");
    if (!(g.period > 0.0)) fail(p + ".period", "must be positive");
    if (g.kind == "square" && !(g.duty > 0.0 && g.duty <= 1.0)) fail(p + ".duty", "must lie in (0, 1]");
    if (g.kind == "pwm") {
      if (g.duties.empty()) fail(p + ".duties", "must not be empty");
      for (std::size_t i = 0; i < g.duties.size(); ++i) {
        if (!(g.duties[i] >= 0.0 && g.duties[i] <= 1.0)) {
          fail(p + ".duties[" + std::to_string(i) + "]", "must lie in [0, 1]");
        }
      }
    }
  } else if (g.kind == "ltv-sampled") {
    if (g.times.empty()) fail(p + ".times", "must not be empty");
    if (g.times.size() != g.samples.size()) {
      fail(p + ".samples", "expected " + std::to_string(g.times.size()) + " matrices (one per time), got " +
                               std::to_string(g.samples.size()));
    }
    for (std::size_t i = 1; i < g.times.size(); ++i) {
      if (!(g.times[i] > g.times[i - 1])) fail(p + ".times", "must be strictly increasing");
    }
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      check_square(g.samples[i], nu, p + ".samples[" + std::to_string(i) + "]");
    }
    if (g.interpolation != "hold" && g.interpolation != "linear") {
      fail(p + ".interpolation", "expected \"hold\" or \"linear\", got \"" + g.interpolation + "\"");
    }
  } else {
    if (g.segments.empty()) fail(p + ".segments", "must not be empty");
    if (g.piece_period && !(*g.piece_period > 0.0)) fail(p + ".period", "must be positive");
    for (std::size_t i = 1; i < g.breakpoints.size(); ++i) {
      if (!(g.breakpoints[i] > g.breakpoints[i - 1])) fail(p + ".breakpoints", "must be strictly increasing");
    }
    if (!g.breakpoints.empty()) {
      const double lo = g.piece_period ? 0.0 : t0;
      const double hi = g.piece_period ? *g.piece_period : std::numeric_limits<double>::infinity();
      if (!(g.breakpoints.front() > lo) || !(g.breakpoints.back() < hi)) {
        fail(p + ".breakpoints", g.piece_period ? "offsets must lie in (0, period)" : "must lie after t0");
      }
    }
    if (g.segments.size() != g.breakpoints.size() + 1) {
      fail(p + ".segments", "expected " + std::to_string(g.breakpoints.size() + 1) + " segments, got " +
                                std::to_string(g.segments.size()));
    }
    for (std::size_t k = 0; k < g.segments.size(); ++k) {
      const std::string sp = p + ".segments[" + std::to_string(k) + "]";
      if (g.segments[k].empty()) fail(sp, "needs at least one coefficient");
      for (std::size_t d = 0; d < g.segments[k].size(); ++d) {
        check_square(g.segments[k][d], nu, sp + "[" + std::to_string(d) + "]");
      }
    }
  }
}

// S~ of a sampled LTV generator and its derivatives.
struct SampledSgen {
  std::vector<double> times;
  std::vector<Matrix> samples;
  bool linear = false;

  // Segment k covers [times[k], times[k+1]); -1 before the first sample.
  std::ptrdiff_t segment(double t, Side side) const {
    auto it = side == Side::Left ? std::lower_bound(times.begin(), times.end(), t)
                                 : std::upper_bound(times.begin(), times.end(), t);
    return (it - times.begin()) - 1;
  }

  Matrix value(double t, Side side) const {
    const auto k = segment(t, side);
    if (k < 0) return samples.front();
    const auto ku = static_cast<std::size_t>(k);
    if (!linear || ku + 1 >= times.size()) return samples[ku];
    const double s = (t - times[ku]) / (times[ku + 1] - times[ku]);
    return (1.0 - s) * samples[ku] + s * samples[ku + 1];
  }

  Matrix jet(double t, int order, Side side) const {
    if (order == 0) return value(t, side);
    const Eigen::Index nu = samples.front().rows();
    const auto k = segment(t, side);
    if (order > 1 || !linear || k < 0 || static_cast<std::size_t>(k) + 1 >= times.size()) {
      return Matrix::Zero(nu, nu);
    }
    const auto ku = static_cast<std::size_t>(k);
    return (samples[ku + 1] - samples[ku]) / (times[ku + 1] - times[ku]);
  }
};

}  // namespace

const std::vector<std::string>& supported_generator_kinds() {
  static const std::vector<std::string> kinds{"lti",    "ltv-sampled", "sawtooth",        "triangular",
                                              "square", "pwm",         "custom-piecewise"};
  return kinds;
}

bool operator==(const Scenario& a, const Scenario& b) { return scenario_json(a) == scenario_json(b); }

void validate(const Scenario& s) {
  validate(s.plant);
  const Eigen::Index nu = s.plant.nu();
  if (static_cast<std::size_t>(nu) != generator_dimension(s.generator) && s.generator.kind != "sawtooth" &&
      s.generator.kind != "triangular" && s.generator.kind != "square" && s.generator.kind != "pwm") {
    fail("plant.P", "has " + std::to_string(nu) + " columns but the generator has dimension " +
                        std::to_string(generator_dimension(s.generator)));
  }
  validate_generator(s.generator, nu, s.t0);
  if (!(s.t_end > s.t0)) fail("horizon", "t_end must exceed t0");
  if (!(s.step > 0.0) || s.step > s.t_end - s.t0) fail("step", "must lie in (0, t_end - t0]");
  auto positive = [](const std::optional<double>& v, const char* path) {
    if (v && !(*v > 0.0)) fail(path, "must be positive");
  };
  positive(s.tol_res, "tolerances.tol_res");
  positive(s.tol_ode, "tolerances.tol_ode");
  positive(s.slope_tol, "tolerances.slope_tol");
  if (s.omega0 && s.omega0->size() != nu) {
    fail("omega0", "expected " + std::to_string(nu) + " entries, got " + std::to_string(s.omega0->size()));
  }
  if (s.initial) {
    const Eigen::Index rows = s.plant.D == 0.0 ? s.plant.n() - 1 : s.plant.n();
    if (s.initial->rows() != rows || s.initial->cols() != nu) {
      std::ostringstream msg;
      msg << "expected " << rows << "x" << nu << ", got " << s.initial->rows() << "x" << s.initial->cols();
      fail("initial", msg.str());
    }
  }
}

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("scenario: JSON parse error: ") + e.what());
  }
  if (!j.is_object()) fail("scenario", "expected a JSON object");
  Scenario s;
  if (j.contains("name")) {
    if (!j["name"].is_string()) fail("name", "expected a string");
    s.name = j["name"].get<std::string>();
  }
  const json& p = require(j, "plant", "");
  s.plant.A = matrix(require(p, "A", "plant"), "plant.A");
  s.plant.B = column(require(p, "B", "plant"), "plant.B");
  s.plant.C = matrix(require(p, "C", "plant"), "plant.C");
  s.plant.D = p.contains("D") ? number(p["D"], "plant.D") : 0.0;
  s.plant.P = matrix(require(p, "P", "plant"), "plant.P");
  s.plant.Q = matrix(require(p, "Q", "plant"), "plant.Q");
  s.generator = parse_generator(require(j, "generator", ""));
  if (j.contains("horizon")) {
    const auto h = number_list(j["horizon"], "horizon");
    if (h.size() != 2) fail("horizon", "expected [t0, t_end]");
    s.t0 = h[0];
    s.t_end = h[1];
  }
  if (j.contains("step")) s.step = number(j["step"], "step");
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (!t.is_object()) fail("tolerances", "expected an object");
    for (const auto& [key, value] : t.items()) {
      const std::string path = "tolerances." + key;
      if (key == "tol_res") s.tol_res = number(value, path);
      else if (key == "tol_ode") s.tol_ode = number(value, path);
      else if (key == "slope_tol") s.slope_tol = number(value, path);
      else fail(path, "unknown tolerance (expected tol_res, tol_ode or slope_tol)");
    }
  }
  if (j.contains("omega0")) {
    const auto w = number_list(j["omega0"], "omega0");
    s.omega0 = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  }
  if (j.contains("initial")) s.initial = matrix(j["initial"], "initial");
  validate(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("scenario: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_string(const Scenario& s) { return scenario_json(s).dump(2) + "\n"; }

void write_scenario(const Scenario& s, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("scenario: cannot write " + tmp);
    out << scenario_to_string(s);
    if (!out) throw Error("scenario: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Generator build_generator(const Scenario& s) {
  const GeneratorSpec& g = s.generator;
  const double t0 = s.t0;
  if (g.kind == "lti") return lti_generator(g.S, t0);
  if (g.kind == "sawtooth") return affine_carrier_generator(sawtooth_carrier(g.period, g.amplitude, t0));
  if (g.kind == "triangular") return affine_carrier_generator(triangular_carrier(g.period, g.amplitude, t0));
  if (g.kind == "square") return affine_carrier_generator(square_carrier(g.period, g.duty, g.low, g.high, t0));
  if (g.kind == "pwm") return affine_carrier_generator(pwm_carrier(g.period, g.duties, g.amplitude, t0));
  if (g.kind == "custom-piecewise") {
    return piecewise_generator(PiecewisePolynomial{g.breakpoints, g.piece_period, g.segments}, t0);
  }
  auto data = std::make_shared<SampledSgen>(SampledSgen{g.times, g.samples, g.interpolation == "linear"});
  const double t_cache = s.t_end + kLtvMargin;
  std::vector<double> bps;
  for (double t : g.times) bps.push_back(t);
  for (double t : g.breakpoints) bps.push_back(t);
  bps.erase(std::remove_if(bps.begin(), bps.end(), [&](double t) { return !(t > t0 && t < t_cache); }), bps.end());
  const TimeGrid cache(t0, t_cache, s.step, bps);
  Generator gen = ltv_generator([data](double t, Side side) { return data->value(t, side); }, t0, cache,
                                [data](double t, int order, Side side) { return data->jet(t, order, side); });
  gen.kind = "ltv-sampled";
  return gen;
}

TimeGrid scenario_grid(const Scenario& s, const Generator& gen) {
  return TimeGrid(s.t0, s.t_end, s.step, gen.breakpoints_in(s.t0, s.t_end));
}

}  // namespace qreg
