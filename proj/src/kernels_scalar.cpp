#include "teco/detail/kernels_ref.hpp"
#include "teco/kernels.hpp"

namespace teco::kern {

const Kernels& scalar_table() {
  static const Kernels table = {
      &ref::gemm_nn<float>, &ref::gemm_nt<float>,  &ref::gemm_tn<float>,
      &ref::axpy<float>,    &ref::vadd<float>,     &ref::vsub<float>,
      &ref::vmul<float>,    &ref::vscale<float>,   &ref::vsum<float>,
      &ref::vdot<float>,    &ref::adam_update<float>,
      "scalar",
  };
  return table;
}

}  // namespace teco::kern
