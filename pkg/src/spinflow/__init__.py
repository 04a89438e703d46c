"""spinflow: spinor energy functionals, gradient flows and G2-structure
tools on flat lattice tori, validated against finite-difference and
brute-force oracles."""

__version__ = "0.1.0"

from .clifford import (
    CliffordAlgebra,
    build_clifford,
    clifford_mul_form,
    clifford_mul_vector,
    clifford_product_sequence,
    spin_inner,
)
from .tensors import (
    DenseTensor,
    Metric,
    antisymmetrize,
    contract_interior,
    hodge_star,
    star_product,
    symmetrize,
    wedge,
)
from .lattice import (
    LatticeTorus,
    SectionField,
    divergence_frame_tensor,
    horizontal_transport,
    l2_inner,
    nabla_spinor,
    spin_lie_derivative,
    sqrt_transport,
)
from .energy import (
    GradientPair,
    d_spinor,
    d_spinor_r,
    deturck_vector,
    energy_tensor,
    energy_value,
    f_tensor,
    f_tensor_r,
    gradient_energy,
    gradient_higher,
    higher_energy_tensor,
    higher_energy_value,
    symbol_form,
    symbol_kernel_vector,
    variation_of_nabla,
)
from .flow import (
    FlowConfig,
    FlowResult,
    flow_step,
    integrate_diffeo,
    perturbed_flat_section,
    run_flow,
)
from .g2 import (
    MetricPath,
    PositiveThreeForm,
    b_action,
    b_linearization,
    fundamental_form,
    insertion_i,
    lambda7_projection,
    ode_evolve,
    reconstruct_metric,
    star_identity_residual,
)
