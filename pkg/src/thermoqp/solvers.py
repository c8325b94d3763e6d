"""Digital linear-system backends: dense direct factorization and conjugate gradients.

Both take a :class:`LinearSolveRequest` and return ``(x, SolveStats)``.  The
reported residual is always recomputed from the returned ``x``.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotConverged, SingularMatrix

SYMMETRY_TOL = 1e-9
PIVOT_TOL = 1e-14


@dataclass
class LinearSolveRequest:
    M: np.ndarray
    rhs: np.ndarray
    tol: float = 1e-10
    max_iters: int | None = None
    x0: np.ndarray | None = None
    # diagonal (Jacobi) preconditioner for CG; off unless requested
    precondition: bool = False

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=np.float64)
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        d = self.rhs.shape[0] if self.rhs.ndim == 1 else -1
        if d < 1 or self.M.shape != (d, d):
            raise DimensionMismatch(f"M {self.M.shape} incompatible with rhs {self.rhs.shape}")

    @property
    def dim(self) -> int:
        return self.rhs.shape[0]


@dataclass
class SolveStats:
    backend: str
    iterations: int
    factorized: bool
    residual: float
    flops: float
    cond_est: float | None = None
    converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def relative_residual(M, x, rhs) -> float:
    rnorm = np.linalg.norm(rhs)
    r = np.linalg.norm(M @ x - rhs)
    return float(r / rnorm) if rnorm > 0 else float(r)


def is_symmetric(M, tol=SYMMETRY_TOL) -> bool:
    scale = max(np.max(np.abs(M)), 1.0)
    return bool(np.max(np.abs(M - M.T)) <= tol * scale)


def solve_direct(req: LinearSolveRequest) -> tuple[np.ndarray, SolveStats]:
    """Dense factorization: Cholesky when ``M`` is symmetric PD, LU otherwise."""
    M, rhs, d = req.M, req.rhs, req.dim
    scale = np.linalg.norm(M, np.inf)
    if scale == 0.0 or not np.all(np.isfinite(M)):
        raise SingularMatrix("matrix is zero or non-finite")
    x = None
    if is_symmetric(M):
        try:
            c, lower = scipy.linalg.cho_factor(M, check_finite=False)
        except np.linalg.LinAlgError:
            pass
        else:
            if np.min(np.diag(c)) ** 2 > PIVOT_TOL * scale:
                x = scipy.linalg.cho_solve((c, lower), rhs, check_finite=False)
    if x is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
        if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL * scale:
            raise SingularMatrix("pivot below tolerance; matrix is singular")
        x = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    # counted as LU regardless of the factorization actually used
    flops = 2.0 * d**3 / 3.0 + 2.0 * d**2
    return x, SolveStats(
        backend="direct",
        iterations=1,
        factorized=True,
        residual=relative_residual(M, x, rhs),
        flops=flops,
    )


def solve_cg(req: LinearSolveRequest) -> tuple[np.ndarray, SolveStats]:
    """Plain conjugate gradients on a symmetric positive definite ``M``.

    Stops once ``||r|| <= tol * ||rhs||``.  Raises :class:`NotConverged`
    carrying the best iterate when ``max_iters`` (default ``10 d``) runs out.
    """
    M, b, d = req.M, req.rhs, req.dim
    max_iters = req.max_iters if req.max_iters is not None else 10 * d
    bnorm = np.linalg.norm(b)
    x = np.zeros(d) if req.x0 is None else np.array(req.x0, dtype=np.float64)
    flops = 0.0
    if bnorm == 0.0:
        return np.zeros(d), SolveStats("cg", 0, False, 0.0, 0.0)
    if req.precondition:
        diag = np.diag(M).copy()
        if np.any(diag <= 0):
            raise ValueError("Jacobi preconditioner needs a positive diagonal")
        inv_diag = 1.0 / diag
    else:
        inv_diag = None

    r = b - M @ x
    flops += 2.0 * d * d
    s = r * inv_diag if inv_diag is not None else r
    p = s.copy()
    rs = float(r @ s)
    target = req.tol * bnorm
    best_x, best_r = x.copy(), np.linalg.norm(r)
    k = 0
    while k < max_iters and np.linalg.norm(r) > target:
        Mp = M @ p
        pMp = float(p @ Mp)
        if pMp <= 0.0:
            raise ValueError("matrix is not positive definite (p^T M p <= 0)")
        alpha = rs / pMp
        x += alpha * p
        r -= alpha * Mp
        s = r * inv_diag if inv_diag is not None else r
        rs_new = float(r @ s)
        p = s + (rs_new / rs) * p
        rs = rs_new
        k += 1
        flops += 2.0 * d * d + 10.0 * d
        rn = np.linalg.norm(r)
        if rn < best_r:
            best_x, best_r = x.copy(), rn
    achieved = relative_residual(M, x, b)
    stats = SolveStats(
        backend="cg",
        iterations=k,
        factorized=False,
        residual=achieved,
        flops=flops,
        converged=bool(np.linalg.norm(r) <= target),
    )
    if not stats.converged:
        stats.residual = relative_residual(M, best_x, b)
        raise NotConverged(
            f"CG did not reach tol={req.tol} in {max_iters} iterations",
            x=best_x,
            residual=stats.residual,
            stats=stats,
        )
    return x, stats


def estimate_condition(M: np.ndarray, rounds: int = 50, seed: int = 0) -> float:
    """Power / inverse-power estimate of ``lambda_max / lambda_min`` for SPD ``M``."""
    rng = np.random.default_rng(seed)
    d = M.shape[0]
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam_max = 0.0
    for _ in range(rounds):
        w = M @ v
        lam_max = float(np.linalg.norm(w))
        if lam_max == 0.0:
            return float("inf")
        v = w / lam_max
    try:
        c = scipy.linalg.cho_factor(M, check_finite=False)
    except np.linalg.LinAlgError:
        return float("inf")
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    inv_max = 0.0
    for _ in range(rounds):
        w = scipy.linalg.cho_solve(c, u, check_finite=False)
        inv_max = float(np.linalg.norm(w))
        u = w / inv_max
    return lam_max * inv_max
