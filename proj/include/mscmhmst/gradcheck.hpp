#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mscmhmst/graph.hpp"

namespace mscmhmst {

/// Builds a scalar loss from `params` inside `graph`. Must be deterministic.
using ScalarFunction = std::function<Var(Graph& graph, ParameterSet& params)>;

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

struct GradcheckOptions {
  double eps = 1e-5;
  std::size_t max_coordinates_per_array = 64;
  std::uint64_t seed = 0x5eed;
};

/// Compares reverse-mode gradients against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps) on sampled coordinates. The error of
/// one coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Parameter values are restored; grad buffers hold the analytic gradient.
GradcheckResult gradcheck(const ScalarFunction& f, ParameterSet& params, const GradcheckOptions& options = {});

}  // namespace mscmhmst
