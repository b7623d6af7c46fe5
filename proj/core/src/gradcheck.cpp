#include "evovit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "evovit/error.hpp"

namespace evovit {

GradCheckReport check_gradients(const ParamRefs& params,
                                const std::function<double(bool)>& objective, double step) {
  if (!(step > 0.0)) throw ConfigError("check_gradients: step must be positive");

  zero_grads(params);
  const double base = objective(true);
  if (!std::isfinite(base)) throw NumericError("check_gradients: objective is non-finite");

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    auto values = p.value.flat();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = objective(false);
      values[i] = saved - step;
      const double minus = objective(false);
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("check_gradients: non-finite objective while perturbing " + p.name +
                           "[" + std::to_string(i) + "]");
      }
      const double fd = (plus - minus) / (2.0 * step);
      const double ad = analytic[pi].flat()[i];
      const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      if (err > report.max_relative_error || report.entries_checked == 0) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_parameter = p.name;
        report.worst_index = i;
      }
      ++report.entries_checked;
    }
  }
  return report;
}

}  // namespace evovit
