"""1D finite elements and reduced bases for affine diffusion problems.

The problem class is -(T_y u')' = f on (0, 1) with zero boundary values
and T_y = T_0 + sum_i y_i T_i, y in [-1, 1]^p.  Discretization uses hat
functions on a uniform mesh with D interior nodes; the Hilbert norm is
the H^1_0 seminorm, so the Gram matrix of the hat basis coincides with
the stiffness matrix of the constant-one coefficient.

High-fidelity solutions serve as ground truth; the reduced basis is a
G-orthonormal POD of solution snapshots.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as dense_linalg

from .errors import EllipticityError, ParameterError, ShapeError, SolverError

__all__ = [
    "ParametricProblem",
    "HighFidelitySystem",
    "ReducedBasis",
    "Constants",
    "load_problem",
    "assemble_high_fidelity",
    "solve_high_fidelity",
    "build_pod_rb",
    "rb_matrices",
    "rb_solve",
    "estimate_constants",
    "sample_parameters",
    "gram_norm",
]

# 3-point Gauss rule on [0, 1]; exact for polynomials up to degree 5
_GAUSS_NODES = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5,
                         0.5 + 0.5 * np.sqrt(0.6)])
_GAUSS_WEIGHTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def _coefficient_from_spec(spec):
    kind = spec.get("kind")
    if kind == "constant":
        value = float(spec["value"])
        return lambda x: np.full_like(np.asarray(x, dtype=float), value)
    if kind == "bump":
        center = float(spec["center"])
        width = float(spec["width"])
        height = float(spec["height"])
        if width <= 0:
            raise ParameterError(f"bump width must be positive, got {width}")

        def bump(x):
            x = np.asarray(x, dtype=float)
            t = (x - center) / width
            out = np.where(np.abs(t) < 1.0,
                           height * np.cos(0.5 * np.pi * t) ** 2, 0.0)
            return out

        return bump
    if kind == "poly":
        coeffs = np.asarray(spec["coeffs"], dtype=float)

        def poly(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for c in coeffs[::-1]:
                out = out * x + c
            return out

        return poly
    raise ParameterError(f"unknown coefficient kind {kind!r}")


@dataclass(frozen=True)
class ParametricProblem:
    """Affine diffusion problem on (0, 1) with box parameters [-1, 1]^p."""

    p: int
    mesh_size: int
    component_specs: tuple
    load_spec: dict
    seed: int = 0
    name: str = ""
    components: tuple = field(init=False, repr=False, compare=False)
    load: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.p < 0:
            raise ParameterError(f"p must be >= 0, got {self.p}")
        if self.mesh_size < 2:
            raise ParameterError(f"mesh size must be >= 2, "
                                 f"got {self.mesh_size}")
        if len(self.component_specs) != self.p + 1:
            raise ParameterError(
                f"need {self.p + 1} coefficient components (nominal plus "
                f"one per parameter), got {len(self.component_specs)}")
        object.__setattr__(
            self, "components",
            tuple(_coefficient_from_spec(s) for s in self.component_specs))
        object.__setattr__(self, "load",
                           _coefficient_from_spec(self.load_spec))

    @classmethod
    def from_dict(cls, data):
        return cls(
            p=int(data["p"]),
            mesh_size=int(data["D"]),
            component_specs=tuple(data["components"]),
            load_spec=dict(data["load"]),
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "")),
        )


def load_problem(path):
    with open(path, "r", encoding="utf-8") as handle:
        return ParametricProblem.from_dict(json.load(handle))


@dataclass(frozen=True)
class HighFidelitySystem:
    """Component stiffness matrices, load vector, and Gram matrix."""

    problem: ParametricProblem
    h: float
    nodes: np.ndarray                 # interior nodes, length D
    stiffness_components: tuple       # p+1 dense (D, D) matrices
    load_vector: np.ndarray           # length D
    gram: np.ndarray                  # (D, D)

    @property
    def dim(self):
        return self.load_vector.shape[0]

    def operator(self, y):
        """Assembled stiffness matrix B_y = B^0 + sum_i y_i B^i."""
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.problem.p:
            raise ShapeError(f"parameter has length {y.shape[0]}, "
                             f"expected {self.problem.p}")
        b = self.stiffness_components[0].copy()
        for yi, comp in zip(y, self.stiffness_components[1:]):
            b += yi * comp
        return b


def _element_tridiagonal(element_integrals, h):
    """Interior stiffness matrix from per-element coefficient integrals."""
    d = element_integrals.shape[0] - 1
    scale = 1.0 / (h * h)
    mat = np.zeros((d, d))
    diag = (element_integrals[:-1] + element_integrals[1:]) * scale
    np.fill_diagonal(mat, diag)
    off = -element_integrals[1:-1] * scale
    mat[np.arange(d - 1), np.arange(1, d)] = off
    mat[np.arange(1, d), np.arange(d - 1)] = off
    return mat


def assemble_high_fidelity(problem, ellipticity_grid=4096):
    """Assemble component stiffness matrices, load vector and Gram matrix.

    All element integrals use the 3-point Gauss rule.  Uniform
    ellipticity of T_0 + sum y_i T_i over the whole parameter box reduces
    to T_0 - sum |T_i| > 0, which is checked on a sample grid.
    """
    grid = np.linspace(0.0, 1.0, ellipticity_grid)
    worst = problem.components[0](grid).copy()
    for comp in problem.components[1:]:
        worst -= np.abs(comp(grid))
    if worst.min() <= 0.0:
        raise EllipticityError(
            f"coefficient not uniformly positive: min over grid is "
            f"{worst.min():.3e}")

    d = problem.mesh_size
    h = 1.0 / (d + 1)
    all_nodes = np.linspace(0.0, 1.0, d + 2)
    # quadrature points per element, shape (d+1, 3)
    xq = all_nodes[:-1, None] + h * _GAUSS_NODES[None, :]

    comps = []
    for coefficient in problem.components:
        integrals = h * (coefficient(xq) @ _GAUSS_WEIGHTS)
        comps.append(_element_tridiagonal(integrals, h))
    gram = _element_tridiagonal(np.full(d + 1, h), h)

    fq = problem.load(xq)
    hat_up = (xq - all_nodes[:-1, None]) / h       # rising hat on element
    hat_down = 1.0 - hat_up                        # falling hat
    load_up = h * ((fq * hat_up) @ _GAUSS_WEIGHTS)
    load_down = h * ((fq * hat_down) @ _GAUSS_WEIGHTS)
    load = load_up[:-1] + load_down[1:]

    return HighFidelitySystem(
        problem=problem,
        h=h,
        nodes=all_nodes[1:-1],
        stiffness_components=tuple(comps),
        load_vector=load,
        gram=gram,
    )


def solve_high_fidelity(system, y, residual_tol=1e-10):
    """Galerkin solution coefficients for one parameter value."""
    matrix = system.operator(y)
    rhs = system.load_vector
    try:
        solution = dense_linalg.solve(matrix, rhs, assume_a="sym")
    except dense_linalg.LinAlgError as exc:
        raise SolverError(f"high-fidelity solve failed: {exc}") from exc
    residual = np.linalg.norm(matrix @ solution - rhs)
    if residual > residual_tol * np.linalg.norm(rhs):
        raise SolverError(f"high-fidelity residual {residual:.3e} exceeds "
                          f"{residual_tol:.1e} * |f|")
    return solution


def gram_norm(system, v):
    """Hilbert norm of the FE function with coefficient vector v."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.abs(v @ (system.gram @ v))))


def sample_parameters(p, count, rng):
    """Uniform samples from the parameter box [-1, 1]^p."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return rng.uniform(-1.0, 1.0, size=(count, p))


@dataclass(frozen=True)
class ReducedBasis:
    """Transformation matrix V with G-orthonormal columns."""

    transform: np.ndarray        # (D, d)
    dim: int
    tol: float                   # energy tolerance used (0.0 if d was fixed)
    spectrum: np.ndarray         # kept POD eigenvalues, descending
    retained_energy: float       # kept energy fraction in [0, 1]

    @property
    def V(self):
        return self.transform


def build_pod_rb(system, snapshot_params, tol=None, d=None, max_dim=None,
                 rank_rel_tol=1e-13):
    """G-orthonormal POD basis from high-fidelity snapshots.

    Either an energy tolerance ``tol`` (discarded eigenvalue mass as a
    fraction of the total) or a target dimension ``d`` must be given;
    ``max_dim`` caps the dimension in the tolerance mode.
    """
    snapshot_params = np.atleast_2d(np.asarray(snapshot_params, dtype=float))
    if snapshot_params.shape[0] == 0:
        raise ParameterError("at least one snapshot parameter is required")
    if (tol is None) == (d is None):
        raise ParameterError("give exactly one of tol= or d=")

    snapshots = np.column_stack(
        [solve_high_fidelity(system, y) for y in snapshot_params])
    correlation = snapshots.T @ (system.gram @ snapshots)
    eigenvalues, eigenvectors = dense_linalg.eigh(correlation)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    total = float(eigenvalues.sum())
    if total <= 0.0:
        raise SolverError("all snapshots vanish; cannot build a basis")
    rank = int(np.sum(eigenvalues > rank_rel_tol * eigenvalues[0]))
    if d is not None:
        if d > rank:
            raise ParameterError(f"requested dimension {d} exceeds the "
                                 f"snapshot rank {rank}")
        keep = d
    else:
        # discarded eigenvalue mass after keeping the first k modes
        tails = total - np.cumsum(eigenvalues)
        keep = int(np.argmax(tails <= tol * total)) + 1
        keep = min(max(keep, 1), rank)
        if max_dim is not None:
            keep = min(keep, max_dim)

    basis = snapshots @ (eigenvectors[:, :keep]
                         / np.sqrt(eigenvalues[:keep]))
    # one re-orthonormalization pass against G guards the 1e-10 invariant
    overlap = basis.T @ (system.gram @ basis)
    if np.max(np.abs(overlap - np.eye(keep))) > 1e-14:
        chol = np.linalg.cholesky(overlap)
        basis = dense_linalg.solve_triangular(chol, basis.T, lower=True).T

    retained = float(eigenvalues[:keep].sum() / total)
    return ReducedBasis(
        transform=basis,
        dim=keep,
        tol=0.0 if tol is None else float(tol),
        spectrum=eigenvalues[:keep].copy(),
        retained_energy=retained,
    )


def rb_matrices(system, basis, y):
    """Reduced stiffness matrix and load vector at one parameter value."""
    v = basis.transform
    return v.T @ system.operator(y) @ v, v.T @ system.load_vector


def rb_solve(system, basis, y):
    """Reduced coefficients and their lift to the high-fidelity basis."""
    b_rb, f_rb = rb_matrices(system, basis, y)
    try:
        u_rb = dense_linalg.solve(b_rb, f_rb, assume_a="sym")
    except dense_linalg.LinAlgError as exc:
        raise SolverError(f"reduced solve failed: {exc}") from exc
    residual = np.linalg.norm(b_rb @ u_rb - f_rb)
    if residual > 1e-10 * max(np.linalg.norm(f_rb), 1e-300):
        raise SolverError(f"reduced residual {residual:.3e} too large")
    return u_rb, basis.transform @ u_rb


@dataclass(frozen=True)
class Constants:
    """Coercivity, continuity, and load bounds with safety margins."""

    c_coer: float
    c_cont: float
    c_rhs: float

    def __post_init__(self):
        if not 0 < self.c_coer <= self.c_cont:
            raise ParameterError(
                f"need 0 < c_coer <= c_cont, got {self.c_coer}, "
                f"{self.c_cont}")


def estimate_constants(system, samples=100, seed=0, margin=0.05):
    """Estimate (C_coer, C_cont, C_rhs) from sampled operators.

    The extreme generalized eigenvalues of (B_y, G) over sampled y give
    the coercivity/continuity range; C_rhs is the dual norm of the load.
    The margin widens the interval so that unseen parameters stay inside.
    """
    if isinstance(samples, (int, np.integer)):
        if samples < 10:
            raise ParameterError(f"need at least 10 samples, got {samples}")
        params = sample_parameters(system.problem.p, int(samples), seed)
    else:
        params = np.atleast_2d(np.asarray(samples, dtype=float))
        if params.shape[0] < 10:
            raise ParameterError(f"need at least 10 samples, "
                                 f"got {params.shape[0]}")
    low = np.inf
    high = -np.inf
    for y in params:
        eigs = dense_linalg.eigh(system.operator(y), system.gram,
                                 eigvals_only=True)
        low = min(low, eigs[0])
        high = max(high, eigs[-1])
    dual = system.load_vector @ dense_linalg.solve(
        system.gram, system.load_vector, assume_a="pos")
    c_rhs = float(np.sqrt(max(dual, 0.0)))
    return Constants(
        c_coer=float(low) * (1.0 - margin),
        c_cont=float(high) * (1.0 + margin),
        c_rhs=c_rhs * (1.0 + margin),
    )
