#pragma once

#include "qreg/exogen.hpp"
#include "qreg/plant.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qreg {

// Generator description as stored in scenario files. Only the fields of the
// selected kind are read and written.
struct GeneratorSpec {
  std::string kind;

  Matrix S;  // lti

  // sawtooth, triangular, square, pwm
  double period = 1.0;
  double amplitude = 1.0;
  double duty = 0.5;
  double low = -1.0;
  double high = 1.0;
  std::vector<double> duties;

  // ltv-sampled: S~ samples at `times`, held or linearly interpolated.
  std::vector<double> times;
  std::vector<Matrix> samples;
  std::string interpolation = "hold";

  // ltv-sampled (extra discontinuities) and custom-piecewise
  std::vector<double> breakpoints;

  // custom-piecewise
  std::optional<double> piece_period;
  std::vector<std::vector<Matrix>> segments;
};

const std::vector<std::string>& supported_generator_kinds();

struct Scenario {
  std::string name;
  Plant plant;
  GeneratorSpec generator;
  double t0 = 0.0;
  double t_end = 10.0;
  double step = 1e-3;
  std::optional<double> tol_res;
  std::optional<double> tol_ode;
  std::optional<double> slope_tol;
  std::optional<Vector> omega0;
  // Initial Pi_z (D = 0, (n-1) x nu) or Pi (D != 0, n x nu).
  std::optional<Matrix> initial;

  Eigen::Index nu() const { return plant.nu(); }
};

bool operator==(const Scenario& a, const Scenario& b);

// Throws Error with a field path ("plant.B: ...", "generator.kind: ...").
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string scenario_to_string(const Scenario& s);
void write_scenario(const Scenario& s, const std::string& path);

// Checks dimensions and invariants; throws Error with a field path.
void validate(const Scenario& s);

// Built for the scenario horizon; LTV caches extend past t_end so that
// backward sweeps beyond the horizon stay inside the cache.
Generator build_generator(const Scenario& s);

// Grid on the scenario horizon with the generator breakpoints as nodes.
TimeGrid scenario_grid(const Scenario& s, const Generator& gen);

}  // namespace qreg
