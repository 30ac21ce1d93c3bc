"""Parameter-to-solution networks for affine diffusion problems.

The affine structure makes the parameter-to-data maps exact one-layer
networks: y -> alpha * B_y^rb (stiffness) and y -> f^rb (load).  All
approximation error enters through the Neumann inversion and the
multiplication heads, whose accuracies follow fixed budget formulas
derived from the problem constants.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

from .approx import MatrixNetSpec, inversion_net, matrix_mult_net, vec
from .calculus import (
    compose_with_selector,
    concat_dense,
    concat_sparse,
    lift_affine,
    parallelize,
    selector_matrix,
)
from .errors import ParameterError
from .network import AffineLayer, NeuralNetwork, realize, realize_batch

__all__ = [
    "AssemblyTolerances",
    "alpha_delta",
    "stiffness_net",
    "rhs_net",
    "stiffness_id_net",
    "inverse_stiffness_net",
    "coefficient_net_rb",
    "coefficient_net_h",
    "hat_basis_net",
    "full_solution_net",
    "SolverNets",
    "assemble_solver_nets",
    "evaluate_solution_grid",
]


def alpha_delta(c_cont, c_coer=None):
    """Scaling alpha = 1/(2 max{1, C_cont}^2) and contraction margin delta.

    With this alpha every rescaled operator satisfies
    ||Id - alpha B_y^rb||_2 <= 1 - delta < 1.  Since alpha mu <= 1/2 on
    the whole spectrum, |1 - alpha mu| is largest at the smallest
    eigenvalue, so the uniform margin is delta = alpha * C_coer; with
    the default c_coer = c_cont (the extreme spectrum-collapse case)
    this reduces to alpha * C_cont.  Either way delta <= 1/2.
    """
    if c_cont <= 0:
        raise ParameterError(f"continuity constant must be positive, "
                             f"got {c_cont}")
    if c_coer is None:
        c_coer = c_cont
    if not 0 < c_coer <= c_cont:
        raise ParameterError(f"need 0 < c_coer <= c_cont, got "
                             f"{c_coer}, {c_cont}")
    alpha = 1.0 / (2.0 * max(1.0, c_cont) ** 2)
    return alpha, alpha * c_coer


@dataclass(frozen=True)
class AssemblyTolerances:
    """Error budgets for the coefficient-net assembly at accuracy eps.

    eps_prime feeds the inverse-stiffness net, eps_dprime the load net,
    eps_tprime the stiffness net inside the inversion; kappa bounds the
    operands of the final multiplication.
    """

    eps: float
    eps_prime: float
    eps_dprime: float
    eps_tprime: float
    alpha: float
    delta: float
    kappa: float
    c_coer: float
    c_cont: float
    c_rhs: float

    @classmethod
    def from_constants(cls, constants, eps):
        alpha, delta = alpha_delta(constants.c_cont, constants.c_coer)
        limit = 0.25 * alpha * min(1.0, constants.c_coer)
        if not 0.0 < eps < limit:
            raise ParameterError(
                f"accuracy eps={eps:.6g} is not admissible: the assembly "
                f"requires 0 < eps < alpha/4 * min(1, C_coer) = {limit:.6g} "
                f"(alpha={alpha:.6g}, C_coer={constants.c_coer:.6g})")
        eps_prime = eps / max(6.0, constants.c_rhs)
        eps_dprime = eps / 3.0 * constants.c_coer
        eps_tprime = 0.375 * eps_prime * alpha * constants.c_coer ** 2
        kappa = 2.0 * max(1.0, constants.c_rhs, 1.0 / constants.c_coer)
        tol = cls(eps=eps, eps_prime=eps_prime, eps_dprime=eps_dprime,
                  eps_tprime=eps_tprime, alpha=alpha, delta=delta,
                  kappa=kappa, c_coer=constants.c_coer,
                  c_cont=constants.c_cont, c_rhs=constants.c_rhs)
        assert tol.delta <= 0.5
        assert tol.eps_tprime < tol.eps_prime < tol.eps
        return tol


def stiffness_net(system, basis, tolerances):
    """Exact one-layer net y -> vec(alpha * B_y^rb).

    Column i holds alpha * vec(V^T B^i V); the bias is the nominal part.
    The alpha prescaling makes the downstream Id-flip a pure sign change.
    """
    v = basis.transform
    alpha = tolerances.alpha
    comps = [alpha * vec(v.T @ b @ v)
             for b in system.stiffness_components]
    weights = np.column_stack(comps[1:]) if len(comps) > 1 else \
        np.zeros((comps[0].size, system.problem.p))
    return NeuralNetwork(
        [AffineLayer(weights, comps[0])], system.problem.p)


def rhs_net(system, basis):
    """Exact one-layer net y -> f^rb (parameter-independent load)."""
    f_rb = basis.transform.T @ system.load_vector
    p = system.problem.p
    zero = sparse.csr_matrix((f_rb.size, p), dtype=np.float64)
    return NeuralNetwork([AffineLayer(zero, f_rb)], p)


def stiffness_id_net(phi_b):
    """Flip y -> vec(alpha B_y^rb) into y -> vec(Id - alpha B_y^rb)."""
    d_sq = phi_b.output_dim
    d = math.isqrt(d_sq)
    if d * d != d_sq:
        raise ParameterError(f"output dim {d_sq} is not a square")
    layers = list(phi_b.layers)
    last = layers[-1]
    layers[-1] = AffineLayer((-last.weights).tocsr(),
                             -last.bias + vec(np.eye(d)))
    return NeuralNetwork(layers, phi_b.input_dim)


def inverse_stiffness_net(phi_b_id, tolerances, d, eps=None):
    """Net y -> vec((B_y^rb)^{-1}) within eps in spectral norm.

    Scales the Neumann inversion of Id - alpha B^rb back by alpha; the
    inner inversion runs at margin delta/2 and accuracy eps/(2 alpha).
    """
    if eps is None:
        eps = tolerances.eps_prime
    limit = 0.25 * tolerances.alpha * min(1.0, tolerances.c_coer)
    if not 0.0 < eps < limit:
        raise ParameterError(
            f"inverse-stiffness accuracy eps={eps:.6g} must lie in "
            f"(0, alpha/4 * min(1, C_coer)) = (0, {limit:.6g})")
    alpha = tolerances.alpha
    inner = inversion_net(d, tolerances.delta / 2.0, eps / (2.0 * alpha))
    composed = concat_sparse(inner, phi_b_id)
    rescale = lift_affine(alpha * sparse.identity(d * d, format="csr"))
    return concat_dense(rescale, composed)


def coefficient_net_rb(phi_b_inv, phi_f, tolerances, d):
    """Net y -> u_y^rb within eps: multiply inverse stiffness by the load.

    The multiplication head treats the inverse as a d x d matrix and the
    load as a d x 1 column, both bounded by kappa, at accuracy eps/3.
    """
    mult = matrix_mult_net(MatrixNetSpec(d, d, 1, tolerances.kappa,
                                         tolerances.eps / 3.0))
    return concat_sparse(mult, parallelize([phi_b_inv, phi_f]))


def coefficient_net_h(phi_u_rb, transform):
    """Lift the reduced coefficient net to high-fidelity coefficients."""
    return concat_sparse(lift_affine(np.asarray(transform, dtype=float)),
                         phi_u_rb)


def hat_basis_net(system, basis, index):
    """2-layer net realizing the reduced basis function psi_index exactly.

    psi = sum_j V[j, index] phi_j is piecewise linear with kinks at the
    mesh nodes, hence sum_k c_k relu(x - x_k) with second-difference
    coefficients c; the representation is exact on [0, 1].
    """
    d = system.dim
    if not 0 <= index < basis.dim:
        raise ParameterError(f"basis index {index} out of range "
                             f"[0, {basis.dim})")
    coeffs = np.zeros(d + 2)
    coeffs[1:-1] = basis.transform[:, index]
    padded = np.concatenate([[0.0], coeffs, [0.0]])
    second_diff = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / system.h
    all_nodes = np.linspace(0.0, 1.0, d + 2)
    first = AffineLayer(np.ones((d + 2, 1)), -all_nodes)
    final = AffineLayer(second_diff.reshape(1, -1), np.zeros(1))
    return NeuralNetwork([first, final], 1)


def basis_sup_bound(basis):
    """Exact sup over x of the Euclidean norm of all basis values.

    The basis vector function is piecewise linear, and the norm is
    convex, so the sup is attained at a mesh node.
    """
    return float(np.max(np.linalg.norm(basis.transform, axis=1)))


def full_solution_net(phi_u_rb, basis_nets, tolerances, eps_tilde,
                      sup_bound=None):
    """Net (y, x) -> u(y, x): dot product of coefficients and basis values.

    The coefficient branch and the parallelized basis nets run on the
    joint input through coordinate selectors; the head multiplies the
    1 x d coefficient row with the d x 1 basis column at accuracy
    eps_tilde/4 with operand bound Z.
    """
    d = phi_u_rb.output_dim
    p = phi_u_rb.input_dim
    if len(basis_nets) != d:
        raise ParameterError(f"need {d} basis nets, got {len(basis_nets)}")
    limit = tolerances.alpha * min(1.0, tolerances.c_coer)
    if not 0.0 < eps_tilde < limit:
        raise ParameterError(
            f"solution accuracy eps_tilde={eps_tilde:.6g} must lie in "
            f"(0, alpha * min(1, C_coer)) = (0, {limit:.6g}) so that the "
            f"inner coefficient accuracy eps_tilde/4 is admissible")
    if sup_bound is None:
        raise ParameterError("sup_bound (sup-norm bound of the basis "
                             "vector function) is required")
    z = max(tolerances.kappa ** 2 + 1.0, sup_bound)
    phi_d = parallelize(list(basis_nets))
    sel_y = selector_matrix(np.arange(p), p + 1)
    sel_x = selector_matrix(np.array([p]), p + 1)
    joint = parallelize([
        compose_with_selector(phi_u_rb, sel_y),
        compose_with_selector(phi_d, sel_x),
    ])
    mult = matrix_mult_net(MatrixNetSpec(1, d, 1, z, eps_tilde / 4.0))
    return concat_sparse(mult, joint)


@dataclass(frozen=True)
class SolverNets:
    """All networks assembled for one problem/basis/accuracy choice."""

    tolerances: AssemblyTolerances
    eps_tilde: float
    z_bound: float
    phi_b: NeuralNetwork
    phi_f: NeuralNetwork
    phi_b_id: NeuralNetwork
    phi_b_inv: NeuralNetwork
    phi_u_rb: NeuralNetwork
    phi_u_h: NeuralNetwork
    basis_nets: tuple
    phi_d: NeuralNetwork
    phi_u: NeuralNetwork


def assemble_solver_nets(system, basis, constants, eps, eps_tilde=None):
    """Build the whole net family at accuracy eps (coefficients).

    eps_tilde defaults to 4 eps C_cont / C_coer, which makes the inner
    coefficient budget eps_tilde/4 at least eps, so the coefficient net
    built at eps serves the solution net as well.
    """
    tol = AssemblyTolerances.from_constants(constants, eps)
    if eps_tilde is None:
        eps_tilde = 4.0 * eps * constants.c_cont / constants.c_coer
    d = basis.dim
    sup_bound = basis_sup_bound(basis)
    logger.debug("assembly: eps=%g eps_tilde=%g d=%d, basis sup bound "
                 "%.3f, budget eps'''=%g held by the exact stiffness net",
                 eps, eps_tilde, d, sup_bound, tol.eps_tprime)
    phi_b = stiffness_net(system, basis, tol)
    phi_f = rhs_net(system, basis)
    phi_b_id = stiffness_id_net(phi_b)
    phi_b_inv = inverse_stiffness_net(phi_b_id, tol, d)
    phi_u_rb = coefficient_net_rb(phi_b_inv, phi_f, tol, d)
    phi_u_h = coefficient_net_h(phi_u_rb, basis.transform)
    basis_nets = tuple(hat_basis_net(system, basis, i) for i in range(d))
    phi_d = parallelize(list(basis_nets))
    phi_u = full_solution_net(phi_u_rb, basis_nets, tol, eps_tilde,
                              sup_bound=sup_bound)
    return SolverNets(
        tolerances=tol,
        eps_tilde=float(eps_tilde),
        z_bound=max(tol.kappa ** 2 + 1.0, sup_bound),
        phi_b=phi_b,
        phi_f=phi_f,
        phi_b_id=phi_b_id,
        phi_b_inv=phi_b_inv,
        phi_u_rb=phi_u_rb,
        phi_u_h=phi_u_h,
        basis_nets=basis_nets,
        phi_d=phi_d,
        phi_u=phi_u,
    )


def evaluate_solution_grid(nets, params, points):
    """Realize the solution net on a parameter x point grid.

    Exploits the block structure of the assembled net: the coefficient
    branch depends only on y and the basis branch only on x, so the
    branches are evaluated once per y (resp. x) before feeding the
    multiplication head.  Relative to realizing the full net pairwise
    this only reassociates the sums of one merged rail layer, so the
    values agree to machine precision (verified in the test suite); it
    turns an ny*nx-fold evaluation of the large coefficient branch into
    an ny-fold one.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    points = np.asarray(points, dtype=float).reshape(-1)
    coeffs = realize_batch(nets.phi_u_rb, params.T)           # (d, ny)
    basis_vals = realize_batch(nets.phi_d, points[None, :])   # (d, nx)
    head = _mult_head(nets)
    ny, nx = params.shape[0], points.size
    out = np.empty((ny, nx))
    for row in range(ny):
        stacked = np.vstack([
            np.repeat(coeffs[:, row][:, None], nx, axis=1),
            basis_vals,
        ])
        out[row] = realize_batch(head, stacked)[0]
    return out


def _mult_head(nets):
    """The multiplication head of the solution net as a standalone net.

    The head's own first layer sits merged behind the identity rails of
    the sparse concatenation; reconstructing it from the stored layers
    would require splitting those rails, so the head is rebuilt from the
    same deterministic constructor arguments instead.
    """
    d = nets.phi_u_rb.output_dim
    return matrix_mult_net(MatrixNetSpec(1, d, 1, nets.z_bound,
                                         nets.eps_tilde / 4.0))
