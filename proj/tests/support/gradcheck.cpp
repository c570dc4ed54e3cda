#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dgm::testing {

GradCheckResult gradcheck(const std::function<Tensor()>& loss, const ParameterList& params,
                          GradCheckOptions options) {
  const std::vector<Tensor> analytic = backward(loss(), params);
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor value = params[p].value;
    auto data = value.mutable_data();
    const auto grad = analytic[p].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        data[i] = saved + options.step;
        plus = loss().item();
        data[i] = saved - options.step;
        minus = loss().item();
      }
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double diff = std::abs(numeric - grad[i]);
      const double scale = std::max(std::abs(numeric), std::abs(grad[i]));
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      ++result.checked;
      if (diff > options.absolute_floor && rel >= options.relative_tolerance) {
        result.ok = false;
      }
      if (diff > options.absolute_floor && rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_where = params[p].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace dgm::testing
