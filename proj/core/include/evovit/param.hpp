#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evovit/matrix.hpp"

namespace evovit {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  // Receives decoupled weight decay during optimization.
  bool decay = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool decays = false)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), decay(decays) {}

  void zero_grad() { grad.fill(0.0); }
};

// Non-owning, ordered view over a set of parameters.
using ParamRefs = std::vector<Parameter*>;

void zero_grads(const ParamRefs& params);

}  // namespace evovit
