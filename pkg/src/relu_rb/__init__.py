"""Training-free ReLU network assembly for reduced-basis PDE solvers.

The package builds feed-forward ReLU networks by writing down their
weights explicitly: structural calculus (identity, concatenation,
parallelization), certified approximation nets (scalar and matrix
multiplication, matrix powers, Neumann-series inversion), a classical
1D finite-element / reduced-basis layer as ground truth, and the
assembly of parameter-to-solution networks for affine diffusion
problems.
"""

from . import backend
from .approx import (
    InversionSpec,
    MatrixNetSpec,
    inversion_net,
    matr,
    matrix_mult_net,
    matrix_pow2_net,
    matrix_pow_net,
    matrix_pow_net_scaled,
    matrix_square_net,
    neumann_steps,
    sawtooth_net,
    scalar_mult_net,
    square_net,
    vec,
)
from .calculus import (
    compose_with_selector,
    concat_dense,
    concat_sparse,
    identity_net,
    lift_affine,
    parallelize,
    pad_depth,
)
from .network import (
    AffineLayer,
    NeuralNetwork,
    SizeReport,
    deserialize,
    realize,
    realize_batch,
    serialize,
    size_metrics,
    validate,
)

__version__ = "0.1.0"
