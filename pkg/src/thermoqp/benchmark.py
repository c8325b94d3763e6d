"""Runtime sweep on the SVM benchmark family: measured digital vs modeled SPU.

The family is the linear-SVM dual on two-feature Gaussian blobs with ``D = n``
training points (so ``n`` QP variables and ``m = 1``).  Digital backends are
timed with ``time.perf_counter`` around the full interior-point solve.  The SPU
is never timed: its cost is the analytic timing model summed over the
iterations of an interior-point run.  By default that run uses the direct
backend on the *regularized* normal equations, a noise-free stand-in for the
SPU trajectory that avoids simulating ``d = 2n + 1`` dimensional circuits;
``simulate_spu=True`` runs the simulator instead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .apps.svm import make_blobs, train_svm
from .ipm import IpmConfig
from .spu_sim import SpuConfig, estimate_timing

SVM_LAMBDA = 0.1


@dataclass
class SweepRow:
    backend: str
    n: int
    m: int
    iterations: int
    status: str
    time_kind: str  # "measured" (wall clock) or "modeled" (timing model)
    time_s: float
    train_accuracy: float

    CSV_COLUMNS = ("backend", "n", "m", "iterations", "status", "time_kind", "time_s", "train_accuracy")

    def to_row(self) -> dict:
        return asdict(self)


def svm_family(n: int, seed: int = 0):
    """Dataset of the benchmark family at size ``n`` (seeded by ``(seed, n)``)."""
    rng = np.random.default_rng([seed, n])
    return make_blobs(n, rng=rng)


def modeled_spu_time(n: int, m: int, iterations: int, config: SpuConfig) -> float:
    """Sum of the per-iteration timing estimates for ``iterations`` solves."""
    return float(sum(estimate_timing(n, m, k, config).total_s for k in range(iterations)))


def backend_config(ipm: IpmConfig, backend: str, spu: SpuConfig | None = None) -> IpmConfig:
    """``ipm`` retargeted to ``backend`` with that backend's default lambda and tolerances."""
    return replace(ipm, backend=backend, lambda_reg=None, eps_p=None, eps_d=None, eps_o=None,
                   spu=spu or ipm.spu)


def _spu_ipm_config(ipm: IpmConfig, spu: SpuConfig, simulate: bool) -> IpmConfig:
    base = backend_config(ipm, "spu", spu)
    if simulate:
        return base
    # noise-free stand-in: same regularization and tolerances, exact solves
    return replace(base, backend="direct")


def sweep_point(n: int, backends, *, seed: int = 0, ipm: IpmConfig | None = None,
                spu: SpuConfig | None = None, simulate_spu: bool = False) -> list[SweepRow]:
    ipm = ipm or IpmConfig()
    spu = spu or SpuConfig()
    dataset = svm_family(n, seed)
    rows = []
    for backend in backends:
        if backend == "spu":
            config = _spu_ipm_config(ipm, spu, simulate_spu)
            model = train_svm(dataset, config, SVM_LAMBDA)
            report = model.report
            if simulate_spu:
                time_s = report.modeled_spu_time.total_s
            else:
                time_s = modeled_spu_time(n, 1, report.iterations, spu)
            kind = "modeled"
        else:
            config = backend_config(ipm, backend)
            model = train_svm(dataset, config, SVM_LAMBDA)
            report = model.report
            time_s = report.wall_time_s
            kind = "measured"
        rows.append(SweepRow(backend, n, 1, report.iterations, report.status.value, kind,
                             float(time_s), model.train_accuracy))
    return rows


def timing_sweep(sizes, backends=("direct", "spu"), *, seed: int = 0, ipm: IpmConfig | None = None,
                 spu: SpuConfig | None = None, simulate_spu: bool = False) -> list[SweepRow]:
    """Rows for every ``(n, backend)`` pair, sorted by ``n`` then backend order."""
    rows = []
    for n in sorted(set(int(s) for s in sizes)):
        if n < 2:
            raise ValueError(f"sweep sizes must be >= 2, got {n}")
        rows.extend(sweep_point(n, backends, seed=seed, ipm=ipm, spu=spu, simulate_spu=simulate_spu))
    return rows


def _times(rows, backend):
    pts = sorted((r.n, r.time_s) for r in rows if r.backend == backend)
    return np.array([p[0] for p in pts], float), np.array([p[1] for p in pts], float)


def speedup(rows, n: int, digital: str = "direct") -> float:
    """``t_digital / t_spu`` at size ``n``."""
    t_d = [r.time_s for r in rows if r.backend == digital and r.n == n]
    t_s = [r.time_s for r in rows if r.backend == "spu" and r.n == n]
    if not t_d or not t_s:
        raise KeyError(f"no {digital}/spu rows at n={n}")
    return t_d[0] / t_s[0]


def crossover(rows, digital: str = "direct") -> float:
    """Smallest size where modeled SPU time drops below the digital time.

    A sign change inside the sweep is located by log-log interpolation between
    the bracketing sizes.  Otherwise both curves are fitted with power laws over
    the sweep and the intersection is extrapolated; ``inf`` means the fitted
    curves never cross above the sweep range.
    """
    n_d, t_d = _times(rows, digital)
    n_s, t_s = _times(rows, "spu")
    if len(n_d) == 0 or not np.array_equal(n_d, n_s):
        raise ValueError("crossover needs digital and spu rows at the same sizes")
    gap = np.log(t_d) - np.log(t_s)  # > 0 where the SPU is faster
    if gap[0] > 0:
        return float(n_d[0])
    for i in range(1, len(gap)):
        if gap[i] > 0:
            ln0, ln1 = math.log(n_d[i - 1]), math.log(n_d[i])
            frac = -gap[i - 1] / (gap[i] - gap[i - 1])
            return float(math.exp(ln0 + frac * (ln1 - ln0)))
    if len(n_d) < 2:
        return math.inf
    ln = np.log(n_d)
    slope_d, icpt_d = np.polyfit(ln, np.log(t_d), 1)
    slope_s, icpt_s = np.polyfit(ln, np.log(t_s), 1)
    if slope_d <= slope_s:
        return math.inf
    return float(math.exp((icpt_s - icpt_d) / (slope_d - slope_s)))


__all__ = [
    "SVM_LAMBDA",
    "SweepRow",
    "backend_config",
    "crossover",
    "modeled_spu_time",
    "speedup",
    "svm_family",
    "sweep_point",
    "timing_sweep",
]
