#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hypnorm::verify {

enum class Profile { Default, Quick };
Profile parse_profile(const std::string& text);
std::string to_string(Profile p);

struct Check {
  std::string name;
  /// Informational checks are reported but never fail the suite.
  bool hard = true;
  bool passed = false;
  /// Measured statistic: a max deviation, a violation count, a max relative error.
  double value = 0.0;
  double threshold = 0.0;
  std::size_t cases = 0;
  std::string detail;
};

struct Sizes {
  std::size_t geometry_cases = 10000;
  std::size_t lemma_inputs = 100;
  std::size_t grad_points = 100;
};

Sizes sizes(Profile p);

/// exp/log inverse at the origin and at random bases, ball membership,
/// left cancellation and d(0, exp0(x)) = 2|x|, each over `cases` draws.
std::vector<Check> geometry_checks(double c, std::size_t cases, std::uint64_t seed);
/// omega bounds, monotonicity on a log grid, and the apply_norm radius bound.
std::vector<Check> omega_checks(std::size_t cases, std::uint64_t seed);
/// apply_norm vs exp0, chained vs collapsed layers for n in {1, 2, 3, 5} and a
/// nonlinear stack, and exp0 o f o log0 rewritten as a rescaling of f.
std::vector<Check> lemma_checks(std::size_t inputs, std::uint64_t seed);
/// n = 1 agreement is hard; the gap for n >= 2 is informational.
std::vector<Check> theorem1_checks(std::size_t inputs, std::uint64_t seed);
/// Zero error at alpha = 0 and exact monotonicity on alpha in {0, 0.1, ..., 1}.
std::vector<Check> midpoint_checks();
/// Central differences against reverse mode for the primitives (1e-5), every
/// model kind and decoder (1e-4), and every scorer (1e-4).
std::vector<Check> gradient_checks(std::size_t points, std::uint64_t seed);

struct Report {
  std::string profile;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
  nlohmann::json to_json() const;
};

Report run_suite(Profile profile, std::uint64_t seed = 0);

}  // namespace hypnorm::verify
