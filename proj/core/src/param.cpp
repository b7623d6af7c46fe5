#include "evovit/param.hpp"

namespace evovit {

void zero_grads(const ParamRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace evovit
