#pragma once

#include <functional>
#include <string>

#include "evovit/param.hpp"

namespace evovit {

inline constexpr double kGradCheckStep = 1e-5;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

// Compares reverse-mode gradients against central differences.
//
// `objective(with_grad)` evaluates the scalar loss at the current parameter
// values. When `with_grad` is true it must also accumulate d(loss)/d(param)
// into every Parameter::grad; grads are zeroed before that call.
//
// Error per entry is |g_ad - g_fd| / max(1, |g_fd|); the report carries the
// maximum. Throws NumericError naming the parameter if the objective turns
// non-finite at a perturbed point.
GradCheckReport check_gradients(const ParamRefs& params,
                                const std::function<double(bool with_grad)>& objective,
                                double step = kGradCheckStep);

}  // namespace evovit
