#include "mscmhmst/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mscmhmst/errors.hpp"
#include "mscmhmst/random.hpp"

namespace mscmhmst {

namespace {

double evaluate(const ScalarFunction& f, ParameterSet& params) {
  Graph graph(false);
  return f(graph, params).value().item();
}

}  // namespace

GradcheckResult gradcheck(const ScalarFunction& f, ParameterSet& params, const GradcheckOptions& options) {
  if (!(options.eps > 0.0)) throw ConfigError("gradcheck: eps must be positive");

  params.zero_grad();
  {
    Graph graph(true);
    Var loss = f(graph, params);
    graph.backward(loss);
  }

  GradcheckResult result;
  Rng rng(options.seed);
  for (auto& entry : params.entries()) {
    const std::size_t n = entry.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > options.max_coordinates_per_array) {
      // partial Fisher-Yates: first k slots become a uniform sample
      for (std::size_t i = 0; i < options.max_coordinates_per_array; ++i) {
        std::swap(coords[i], coords[i + rng.below(n - i)]);
      }
      coords.resize(options.max_coordinates_per_array);
    }
    for (std::size_t c : coords) {
      double& slot = entry.value[c];
      const double saved = slot;
      slot = saved + options.eps;
      const double plus = evaluate(f, params);
      slot = saved - options.eps;
      const double minus = evaluate(f, params);
      slot = saved;

      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double analytic = entry.grad[c];
      const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.coordinates_checked;
      if (result.worst_parameter.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = entry.name;
        result.worst_index = c;
      }
    }
  }
  return result;
}

}  // namespace mscmhmst
