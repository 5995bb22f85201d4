#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace spoa {

/// An objective evaluated at a flat parameter vector, together with the
/// activation sign pattern of the forward pass that produced it.
struct Probe {
  double value = 0.0;
  std::vector<bool> pattern;
};
using Objective = std::function<Probe(std::span<const double>)>;

struct FdComparison {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crossed an activation kink at both step sizes
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Five-point central differences of `f` around `point` for every coordinate, scaled by
/// `fd_scale`, compared against `analytic`. A coordinate whose perturbation
/// changes the activation pattern at +/-step or +/-2 step is retried at step/10
/// and step/100, and skipped if it still does.
FdComparison compare_with_finite_differences(const std::vector<double>& point, std::span<const double> analytic,
                                             const Objective& f, double step = 1e-3, double fd_scale = 1.0);

enum class GradcheckFault { None, SignFlip };

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 1;  // random instances per finite-difference suite
  std::size_t identity_instances = 20;
  double tolerance = 1e-4;
  double identity_tolerance = 1e-12;
  GradcheckFault fault = GradcheckFault::None;
};

// Suites on 8x8 states, 4 feature channels, two blocks of each kind.
SuiteResult check_primitives(const GradcheckOptions& options);
SuiteResult check_actor_gradient(const GradcheckOptions& options);
SuiteResult check_policy_gradient(const GradcheckOptions& options);
SuiteResult check_combined_identity(const GradcheckOptions& options);

std::vector<SuiteResult> run_gradcheck(const GradcheckOptions& options);

}  // namespace spoa
