"""Primal-dual path-following interior-point method with a pluggable linear solver.

Each iteration forms the Newton system ``J dr = v``, symmetrizes it to
``(J^T J + lambda I) dr = J^T v`` and hands that to a backend:

* ``direct`` -- dense Cholesky/LU (default ``lambda = 0``)
* ``cg``     -- conjugate gradients (default ``lambda = 0.1``)
* ``spu``    -- the simulated thermodynamic solver (default ``lambda = 0.1``)

The normal matrix is built once and afterwards only its X/Z diagonals are
refreshed.  Because ``lambda > 0`` perturbs the step, the complementarity row
``Z dx + X dz = sigma mu e - XZe`` can be re-imposed on the returned
direction; by default the raw and the corrected direction compete on a
residual merit (``IpmConfig.recover``).  Optional iterative refinement
(``refine_steps``) pulls the regularized step toward the exact Newton step.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from . import kkt
from .errors import NotConverged, ThermoQpError
from .qp_core import IterateState, QpProblem, objective, residuals
from .solvers import LinearSolveRequest, solve_cg, solve_direct
from .spu_sim import SpuConfig, TimingEstimate, tls_solve

BACKENDS = ("direct", "cg", "spu")
RECOVER_MODES = ("none", "dz", "split", "merit")
MU_FLOOR = 1e-14


class Status(str, Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class IpmConfig:
    alpha0: float = 0.99
    sigma: float = 0.1
    eps_p: float | None = None
    eps_d: float | None = None
    eps_o: float | None = None
    max_iters: int = 200
    backend: str = "direct"
    lambda_reg: float | None = None
    cg_tol: float = 1e-10
    cg_max_iters: int | None = None
    recover: str = "merit"
    refine_steps: int = 0
    spu: SpuConfig = field(default_factory=SpuConfig)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        default_eps = 1e-4 if self.backend == "spu" else 1e-6
        for name in ("eps_p", "eps_d", "eps_o"):
            if getattr(self, name) is None:
                setattr(self, name, default_eps)
        if self.lambda_reg is None:
            self.lambda_reg = 0.0 if self.backend == "direct" else 0.1
        for name in ("alpha0", "sigma", "eps_p", "eps_d", "eps_o"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be non-negative")
        if self.recover not in RECOVER_MODES:
            raise ValueError(f"recover must be one of {RECOVER_MODES}, got {self.recover!r}")
        if isinstance(self.spu, dict):
            self.spu = SpuConfig.from_dict(self.spu)

    @classmethod
    def from_dict(cls, data: dict) -> "IpmConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown IpmConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spu"] = self.spu.to_dict()
        return out


@dataclass
class IterationRecord:
    k: int
    primal_res: float
    dual_res: float
    mu: float
    mu_realized: float
    alpha_p: float
    alpha_d: float
    objective: float
    backend: dict


@dataclass
class SolveReport:
    x_star: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: Status
    iterations: int
    trace: list[IterationRecord]
    objective: float
    duality_gap: float
    wall_time_s: float
    timing: list[TimingEstimate] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def modeled_spu_time(self) -> TimingEstimate | None:
        if not self.timing:
            return None
        total = TimingEstimate.zero()
        for t in self.timing:
            total = total + t
        return total

    def to_dict(self) -> dict:
        out = {
            "status": self.status.value,
            "iterations": self.iterations,
            "x_star": self.x_star.tolist(),
            "y": self.y.tolist(),
            "z": self.z.tolist(),
            "objective": self.objective,
            "duality_gap": self.duality_gap,
            "wall_time_s": self.wall_time_s,
            "message": self.message,
            "trace": [asdict(r) for r in self.trace],
        }
        spu = self.modeled_spu_time
        if spu is not None:
            out["modeled_spu_time"] = asdict(spu)
            out["modeled_spu_time_per_iteration"] = [asdict(t) for t in self.timing]
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# -- backends -------------------------------------------------------------------


class DirectBackend:
    name = "direct"

    def solve(self, M, rhs):
        x, stats = solve_direct(LinearSolveRequest(M, rhs))
        return x, stats.to_dict()


class CgBackend:
    name = "cg"

    def __init__(self, tol=1e-10, max_iters=None):
        self.tol = tol
        self.max_iters = max_iters

    def solve(self, M, rhs):
        req = LinearSolveRequest(M, rhs, tol=self.tol, max_iters=self.max_iters)
        try:
            x, stats = solve_cg(req)
        except NotConverged as exc:
            # an inexact Newton direction is still usable
            return exc.x, exc.stats.to_dict()
        return x, stats.to_dict()


class SpuBackend:
    name = "spu"

    def __init__(self, config: SpuConfig, n: int, m: int):
        self.config = config
        self.block_dims = (n, m)
        self.calls = 0
        self.timing: list[TimingEstimate] = []

    def solve(self, M, rhs):
        seed = np.random.SeedSequence([self.config.seed, self.calls])
        x, timing, stats = tls_solve(
            M,
            rhs,
            self.config,
            seed=np.random.default_rng(seed),
            block_dims=self.block_dims,
            iteration_index=self.calls,
        )
        self.calls += 1
        self.timing.append(timing)
        out = stats.to_dict()
        out["modeled_time_s"] = timing.total_s
        return x, out


def make_backend(config: IpmConfig, problem: QpProblem):
    if config.backend == "direct":
        return DirectBackend()
    if config.backend == "cg":
        return CgBackend(config.cg_tol, config.cg_max_iters)
    return SpuBackend(config.spu, problem.n, problem.m)


# -- algorithm pieces -------------------------------------------------------------


def initialize(problem: QpProblem, config: IpmConfig | None = None, warm_start: IterateState | None = None) -> IterateState:
    """Starting iterate: ``x = z = e``, ``y = 0`` unless a valid warm start is given."""
    n, m = problem.n, problem.m
    if warm_start is not None:
        if warm_start.x.shape != (n,) or warm_start.z.shape != (n,) or warm_start.y.shape != (m,):
            raise ValueError("warm start has wrong dimensions")
        if not warm_start.is_interior():
            raise ValueError("warm start must satisfy x > 0 and z > 0")
        state = warm_start.copy()
        state.mu = state.complementarity()
        state.k = 0
        return state
    return IterateState(x=np.ones(n), y=np.zeros(m), z=np.ones(n))


def _ratio_test(v, dv) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def recover_direction(state: IterateState, dr, n: int, m: int, sigma: float, mode: str = "split"):
    """Split ``dr`` into ``(dx, dy, dz)`` and re-impose the complementarity row.

    The regularized normal equations only satisfy ``Z dx + X dz = sigma mu e - XZe``
    approximately.  ``"dz"`` solves that row for ``dz`` everywhere; ``"split"``
    solves it for whichever of ``dx_i``/``dz_i`` has the larger coefficient
    (``x_i`` resp. ``z_i``), so the division never amplifies solver error.
    """
    dx, dy, dz = dr[:n].copy(), dr[n:n + m].copy(), dr[n + m:].copy()
    if mode == "none":
        return dx, dy, dz
    x, z = state.x, state.z
    target = sigma * state.complementarity() - x * z
    if mode == "dz":
        return dx, dy, (target - z * dx) / x
    fix_z = x >= z
    dz[fix_z] = (target[fix_z] - z[fix_z] * dx[fix_z]) / x[fix_z]
    fix_x = ~fix_z
    dx[fix_x] = (target[fix_x] - x[fix_x] * dz[fix_x]) / z[fix_x]
    return dx, dy, dz


def select_direction(problem: QpProblem, state: IterateState, dr, sigma: float, alpha0: float):
    """Pick between the raw and the ``"split"``-recovered direction.

    Each candidate is stepped with its own ratio-test step sizes and scored by
    the sum of the three termination ratios at the trial point; the smaller
    score wins.  Re-imposing complementarity alone can drive ``x`` to zero
    while the dual residual stalls, and the raw regularized step can jam
    ``z`` against the boundary; the merit comparison avoids both.
    """
    n, m = problem.n, problem.m
    best, best_score = None, math.inf
    for mode in ("split", "none"):
        delta = recover_direction(state, dr, n, m, sigma, mode)
        a_p, a_d = step_sizes(state, delta, alpha0)
        trial = IterateState(state.x + a_p * delta[0], state.y + a_d * delta[1], state.z + a_d * delta[2])
        if not trial.is_interior():
            continue
        score = sum(termination_ratios(problem, trial))
        if score < best_score:
            best, best_score = delta, score
    if best is None:
        best = recover_direction(state, dr, n, m, sigma, "split")
    return best


def step_sizes(state: IterateState, delta, alpha0: float) -> tuple[float, float]:
    """Scaled ratio test; ``delta`` is a ``(dx, dy, dz)`` triple."""
    dx, _, dz = delta
    return alpha0 * _ratio_test(state.x, dx), alpha0 * _ratio_test(state.z, dz)


def termination_ratios(problem: QpProblem, state: IterateState) -> tuple[float, float, float]:
    res = residuals(problem, state)
    rp = res.primal_norm / (1.0 + np.linalg.norm(problem.b))
    rd = res.dual_norm / (1.0 + np.linalg.norm(problem.c))
    ro = res.comp / (1.0 + abs(objective(problem, state.x)))
    return rp, rd, ro


def termination(problem: QpProblem, state: IterateState, config: IpmConfig) -> bool:
    """The loop's continue-condition: ``True`` while any ratio exceeds its tolerance."""
    rp, rd, ro = termination_ratios(problem, state)
    return bool(rp > config.eps_p or rd > config.eps_d or ro > config.eps_o)


def _report(problem, state, status, trace, start, backend, message=""):
    timing = list(getattr(backend, "timing", []))
    return SolveReport(
        x_star=state.x.copy(),
        y=state.y.copy(),
        z=state.z.copy(),
        status=status,
        iterations=len(trace),
        trace=trace,
        objective=objective(problem, state.x),
        duality_gap=float(state.x @ state.z),
        wall_time_s=time.perf_counter() - start,
        timing=timing,
        message=message,
    )


def solve(problem: QpProblem, config: IpmConfig | None = None, warm_start: IterateState | None = None, *, on_iteration=None) -> SolveReport:
    """Run the interior-point loop until the termination test passes.

    ``on_iteration(state, normal_system)`` is called after every accepted
    step; tests use it to audit the cached normal matrix.
    """
    config = config or IpmConfig()
    start = time.perf_counter()
    n, m = problem.n, problem.m
    state = initialize(problem, config, warm_start)
    backend = make_backend(config, problem)
    ksys = kkt.build_jacobian(problem, state, config.sigma)
    ns = kkt.build_normal_system(problem, state, config.lambda_reg)
    mu = state.mu
    trace: list[IterationRecord] = []

    condition = True
    while condition:
        if len(trace) >= config.max_iters:
            return _report(problem, state, Status.ITER_LIMIT, trace, start, backend,
                           f"no convergence in {config.max_iters} iterations")
        mu = max(config.sigma * mu, MU_FLOOR)
        if trace:
            kkt.update_jacobian(ksys, problem, state)
            ns.update(state)
        rhs = kkt.build_normal_rhs(ksys)

        try:
            dr, stats = backend.solve(ns.Jt, rhs)
        except (ThermoQpError, np.linalg.LinAlgError, ValueError) as exc:
            return _report(problem, state, Status.NUMERICAL_FAILURE, trace, start, backend,
                           f"linear solve failed: {exc}")
        if not np.all(np.isfinite(dr)):
            return _report(problem, state, Status.NUMERICAL_FAILURE, trace, start, backend,
                           "non-finite Newton direction")
        for _ in range(config.refine_steps):
            try:
                corr, _ = backend.solve(ns.Jt, ksys.J.T @ (ksys.v - ksys.J @ dr))
            except (ThermoQpError, np.linalg.LinAlgError, ValueError) as exc:
                return _report(problem, state, Status.NUMERICAL_FAILURE, trace, start, backend,
                               f"refinement solve failed: {exc}")
            dr = dr + corr
        if config.recover == "merit":
            dx, dy, dz = select_direction(problem, state, dr, ksys.sigma, config.alpha0)
        else:
            dx, dy, dz = recover_direction(state, dr, n, m, ksys.sigma, config.recover)

        alpha_p, alpha_d = step_sizes(state, (dx, dy, dz), config.alpha0)
        new = IterateState(
            x=state.x + alpha_p * dx,
            y=state.y + alpha_d * dy,
            z=state.z + alpha_d * dz,
            mu=mu,
            k=state.k + 1,
        )
        if not new.is_interior():
            return _report(problem, state, Status.NUMERICAL_FAILURE, trace, start, backend,
                           "iterate left the interior")
        state = new

        res = residuals(problem, state)
        trace.append(
            IterationRecord(
                k=state.k,
                primal_res=res.primal_norm,
                dual_res=res.dual_norm,
                mu=mu,
                mu_realized=res.comp,
                alpha_p=alpha_p,
                alpha_d=alpha_d,
                objective=objective(problem, state.x),
                backend=stats,
            )
        )
        if on_iteration is not None:
            on_iteration(state, ns)
        condition = termination(problem, state, config)

    return _report(problem, state, Status.CONVERGED, trace, start, backend)


def iteration_bound(n: int, m: int, eps: float) -> float:
    """``sqrt(n + m) * log(1 / eps)``, the shape of the short-step bound."""
    return math.sqrt(n + m) * math.log(1.0 / eps)
