"""Linearized difference-image reconstruction.

Solves S x = b for the conductivity perturbation x from difference data b,
with an edge-preserving l1 penalty on the spatial differences D x. The
main solver reweights the penalty each iteration with

    weight(k) = 1 / (|gradient at k|^2 + delta),

so strong edges are penalized weakly and flat regions strongly. The
splitting variable z = D x is handled by ADMM:

    x  <- argmin (1/(2 rho))|S x - b|^2 + (1/2)|D x - z + y/rho|^2
    z  <- shrink(D x + y/rho)        (closed form, per component)
    y  <- y + rho (D x - z)

Baselines: the same loop with frozen unit weights (anisotropic TV), a
group-shrinkage variant coupling the x/y difference pairs (isotropic TV),
and one-shot ridge-regularized least squares.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .forward import SensitivityMatrix, SolverError, VoltageFrame
from .mesh import DifferenceOperators

log = logging.getLogger(__name__)

# identity floor added to the quadratic system when factorization reports
# it is not positive definite (possible when D has zero rows)
_PIVOT_FLOOR = 1e-12

# relative residual required of the quadratic x-update solve
_UPDATE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Reconstruction parameters.

    lam        l1 penalty weight (0 switches the penalty off)
    rho        ADMM coupling weight, > 0
    delta      floor in the nonlinear weights, > 0
    max_iters  iteration cap M
    tol        stop when the iterate step |x_new - x| drops below this
    mask       optional element indices outside of which x is forced to 0
    lambda_b   ridge weight of the boundary-data preprocessing
    enable_preprocess   subtract the boundary-element-explainable part of b
    """

    lam: float
    rho: float
    delta: float = 0.01
    max_iters: int = 20
    tol: float = 1e-5
    mask: np.ndarray | None = None
    lambda_b: float = 1e-7
    enable_preprocess: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")


@dataclass
class AdmmState:
    """One snapshot of the ADMM variables."""

    delta_sigma: np.ndarray  # length N
    z: np.ndarray  # length 2N
    p: np.ndarray  # length 2N, strictly positive
    y: np.ndarray  # length 2N
    iteration: int


@dataclass(frozen=True)
class ReconResult:
    """Reconstruction output with per-iteration diagnostics.

    ``history[n]`` is the iterate after iteration n+1; the diagnostic
    arrays have one entry per completed iteration. ``termination`` is
    "tol" or "max_iters". For the one-shot ridge solver the history has a
    single row.
    """

    final: np.ndarray
    history: np.ndarray
    data_residual: np.ndarray
    step_norm: np.ndarray
    wall_ms: np.ndarray
    termination: str

    @property
    def n_iterations(self) -> int:
        return len(self.step_norm)


def _as_matrix(s) -> np.ndarray:
    if isinstance(s, SensitivityMatrix):
        return s.matrix
    return np.asarray(s, dtype=float)


def _as_data(b) -> np.ndarray:
    if isinstance(b, VoltageFrame):
        return b.data
    return np.asarray(b, dtype=float)


def soft_threshold(x, g):
    """Shrink toward zero: x - g*sgn(x) where |x| > g, else 0.

    Elementwise on arrays; g may be a scalar or an array of thresholds.
    The |x| = g boundary maps to 0.
    """
    g_arr = np.asarray(g, dtype=float)
    if np.any(g_arr < 0):
        raise ValueError("threshold must be nonnegative")
    x_arr = np.asarray(x, dtype=float)
    out = np.where(np.abs(x_arr) > g_arr, x_arr - g_arr * np.sign(x_arr), 0.0)
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def group_shrink(w: np.ndarray, g: float) -> np.ndarray:
    """Vector shrinkage on paired components (w[k], w[N+k]).

    Each pair is scaled by max(0, 1 - g/|pair|); pairs with norm <= g
    collapse to zero. Rotation-invariant within each pair.
    """
    if g < 0:
        raise ValueError("threshold must be nonnegative")
    w = np.asarray(w, dtype=float)
    n = len(w) // 2
    wx, wy = w[:n], w[n:]
    norms = np.hypot(wx, wy)
    factor = np.zeros(n)
    nz = norms > 0
    factor[nz] = np.maximum(0.0, 1.0 - g / norms[nz])
    return np.concatenate([factor * wx, factor * wy])


def nwatv_weights(delta_sigma: np.ndarray, ops: DifferenceOperators, delta: float) -> np.ndarray:
    """Edge-adaptive weights 1/(|g_k|^2 + delta), duplicated over the x and
    y blocks; |g_k|^2 is the squared difference magnitude at element k."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    gx = ops.dx @ delta_sigma
    gy = ops.dy @ delta_sigma
    zeta = 1.0 / (gx * gx + gy * gy + delta)
    return np.concatenate([zeta, zeta])


def z_update(w: np.ndarray, p: np.ndarray, lam: float, rho: float) -> np.ndarray:
    """Elementwise shrinkage of w = Dx + y/rho with thresholds lam*p/rho."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("weights must be strictly positive")
    return soft_threshold(w, lam * p / rho)


def dual_update(
    y: np.ndarray, ops: DifferenceOperators, delta_sigma: np.ndarray, z: np.ndarray, rho: float
) -> np.ndarray:
    """y + rho * (D delta_sigma - z)."""
    return y + rho * (ops.stacked @ delta_sigma - z)


def apply_mask(delta_sigma: np.ndarray, mask) -> np.ndarray:
    """Zero all entries outside the mask (boolean array or index list)."""
    out = np.zeros_like(delta_sigma)
    mask = np.asarray(mask)
    out[mask] = delta_sigma[mask]
    return out


def preprocess_boundary(delta_v, s, boundary_elements, lambda_b: float) -> np.ndarray:
    """Remove the part of the data explainable by boundary elements alone.

    Projects b onto the column space of the boundary-element columns of S
    (ridge-stabilized by lambda_b) and subtracts that component; interior
    contrasts survive while near-electrode artifacts shrink.
    """
    if not lambda_b > 0:
        raise ValueError(f"lambda_b must be > 0, got {lambda_b}")
    idx = np.asarray(boundary_elements, dtype=int)
    if idx.size == 0:
        raise ValueError("boundary element set is empty")
    s = _as_matrix(s)
    b = _as_data(delta_v)
    if s.shape[0] != b.shape[0]:
        raise ValueError(f"S has {s.shape[0]} rows but data has length {b.shape[0]}")
    sb = s[:, idx]
    gram = sb.T @ sb + lambda_b * np.eye(idx.size)
    coef = sla.solve(gram, sb.T @ b, assume_a="pos")
    return b - sb @ coef


class _QuadraticSolver:
    """Prefactored solver for ((1/rho) S^T S + D^T D) x = rhs.

    The matrix is fixed across ADMM iterations, so it is factorized once.
    If the Cholesky factorization reports a non-positive pivot (possible
    when D has zero rows), a trace-scaled identity floor is added and the
    factorization retried.
    """

    def __init__(self, s: np.ndarray, ops: DifferenceOperators, rho: float):
        n = s.shape[1]
        dtd = (ops.stacked.T @ ops.stacked).toarray()
        m = (s.T @ s) / rho + dtd
        self.floored = False
        try:
            self.factor = sla.cho_factor(m, lower=True)
        except np.linalg.LinAlgError:
            floor = _PIVOT_FLOOR * np.trace(m) / n
            log.warning(
                "quadratic system not positive definite; adding identity floor %.3e",
                floor,
            )
            m = m + floor * np.eye(n)
            self.floored = True
            try:
                self.factor = sla.cho_factor(m, lower=True)
            except np.linalg.LinAlgError as exc:
                raise SolverError(
                    "quadratic system is not positive definite even with floor",
                    diagnostics={
                        "condition": float(np.linalg.cond(m)),
                        "floor": floor,
                    },
                ) from exc
        self.m = m

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        norm_rhs = np.linalg.norm(rhs)
        if norm_rhs == 0:
            return np.zeros_like(rhs)
        x = sla.cho_solve(self.factor, rhs)
        for _ in range(5):
            r = rhs - self.m @ x
            if np.linalg.norm(r) <= _UPDATE_RESIDUAL_TOL * norm_rhs:
                return x
            x = x + sla.cho_solve(self.factor, r)
        rel = np.linalg.norm(rhs - self.m @ x) / norm_rhs
        if rel <= _UPDATE_RESIDUAL_TOL:
            return x
        raise SolverError(
            f"x-update residual {rel:.3e} above {_UPDATE_RESIDUAL_TOL:.0e}",
            diagnostics={"relative_residual": rel, "condition": float(np.linalg.cond(self.m))},
        )


def sigma_update(s, delta_v, ops: DifferenceOperators, z, y, rho: float) -> np.ndarray:
    """One quadratic x-update: ((1/rho)S^T S + D^T D) x = (1/rho)S^T b + D^T z - D^T y/rho."""
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    s = _as_matrix(s)
    b = _as_data(delta_v)
    solver = _QuadraticSolver(s, ops, rho)
    rhs = s.T @ b / rho + ops.stacked.T @ (z - y / rho)
    return solver.solve(rhs)


def _admm_reconstruct(
    s, delta_v, ops: DifferenceOperators, config: SolverConfig, *,
    variant: str, boundary_elements=None,
) -> ReconResult:
    s = _as_matrix(s)
    b = _as_data(delta_v)
    if s.shape[0] != b.shape[0]:
        raise ValueError(f"S has {s.shape[0]} rows but data has length {b.shape[0]}")
    if s.shape[1] != ops.n_elements:
        raise ValueError("difference operators do not match the sensitivity columns")
    if config.enable_preprocess:
        if boundary_elements is None:
            raise ValueError("preprocessing enabled but no boundary element set given")
        b = preprocess_boundary(b, s, boundary_elements, config.lambda_b)

    rho = config.rho
    solver = _QuadraticSolver(s, ops, rho)
    d = ops.stacked
    n = s.shape[1]
    st_b = s.T @ b / rho

    state = AdmmState(
        delta_sigma=np.zeros(n),
        z=np.zeros(2 * n),
        p=np.ones(2 * n),
        y=np.zeros(2 * n),
        iteration=0,
    )
    b_norm = np.linalg.norm(b)
    history, residuals, steps, walls = [], [], [], []
    termination = "max_iters"

    for it in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        rhs = st_b + d.T @ (state.z - state.y / rho)
        try:
            x = solver.solve(rhs)
        except SolverError as exc:
            raise SolverError(
                f"iteration {it}: {exc}", iteration=it, diagnostics=exc.diagnostics
            ) from exc
        if config.mask is not None:
            x = apply_mask(x, config.mask)
        w = d @ x + state.y / rho
        if variant == "isotropic":
            z = group_shrink(w, config.lam / rho)
        else:
            z = z_update(w, state.p, config.lam, rho)
        if variant == "nwatv":
            p = nwatv_weights(x, ops, config.delta)
        else:
            p = state.p
        y = state.y + rho * (d @ x - z)

        step = float(np.linalg.norm(x - state.delta_sigma))
        state = AdmmState(delta_sigma=x, z=z, p=p, y=y, iteration=it)
        history.append(x.copy())
        residuals.append(
            float(np.linalg.norm(s @ x - b) / b_norm) if b_norm > 0
            else float(np.linalg.norm(s @ x))
        )
        steps.append(step)
        walls.append((time.perf_counter() - t0) * 1000.0)
        if step < config.tol:
            termination = "tol"
            break

    return ReconResult(
        final=state.delta_sigma,
        history=np.array(history),
        data_residual=np.array(residuals),
        step_norm=np.array(steps),
        wall_ms=np.array(walls),
        termination=termination,
    )


def reconstruct_nwatv(
    s, delta_v, ops: DifferenceOperators, config: SolverConfig, boundary_elements=None
) -> ReconResult:
    """ADMM with the nonlinear reweighted anisotropic penalty (weights
    recomputed from the current iterate each iteration)."""
    return _admm_reconstruct(
        s, delta_v, ops, config, variant="nwatv", boundary_elements=boundary_elements
    )


def reconstruct_fotv(
    s, delta_v, ops: DifferenceOperators, config: SolverConfig, boundary_elements=None
) -> ReconResult:
    """Same ADMM loop with the weights frozen at one (plain anisotropic TV)."""
    return _admm_reconstruct(
        s, delta_v, ops, config, variant="fotv", boundary_elements=boundary_elements
    )


def reconstruct_tv_isotropic(
    s, delta_v, ops: DifferenceOperators, config: SolverConfig, boundary_elements=None
) -> ReconResult:
    """ADMM with rotation-invariant group shrinkage coupling the (x, y)
    difference pairs. This baseline is algorithmically unrelated to the
    historical primal-dual TV solvers; timings are not comparable to them."""
    return _admm_reconstruct(
        s, delta_v, ops, config, variant="isotropic", boundary_elements=boundary_elements
    )


def reconstruct_tikhonov(s, delta_v, lam: float) -> np.ndarray:
    """One-shot ridge solution (S^T S + lam I)^{-1} S^T b."""
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    s = _as_matrix(s)
    b = _as_data(delta_v)
    n = s.shape[1]
    factor = sla.cho_factor(s.T @ s + lam * np.eye(n), lower=True)
    return sla.cho_solve(factor, s.T @ b)
