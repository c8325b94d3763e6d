"""Simulated stochastic processing unit (SPU) and its timing model.

The device is an RC network driven by Gaussian current noise.  In solver
units (time measured in multiples of ``RC``) the node voltages obey the
Ornstein-Uhlenbeck equation

    dV = -(M V - rhs) ds + sqrt(2 * kappa0) dW

whose stationary law is ``N(M^{-1} rhs, kappa0 * M^{-1})``.  A linear solve
lets the circuit equilibrate for a burn-in time and returns the time average
of ``V`` over a subsequent window.  In circuit terms ``M = R * G`` and
``rhs = V_in``; the conductance matrix ``G`` encodes the system matrix and the
input voltages encode the right-hand side.

Two integrators are available: ``"exact"`` propagates each eigenmode with its
exact Gaussian transition (no discretization bias, needs an eigendecomposition)
and ``"euler"`` is plain Euler-Maruyama in node coordinates.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy.signal
import scipy.stats

from .errors import DimensionMismatch, NonPositiveEigenvalue, Unstable

DIVERGENCE_LIMIT = 1e12


@dataclass
class SpuConfig:
    """Circuit constants and Algorithm-level knobs of the simulated device.

    ``temperature`` is the noise scale ``kappa0`` in solver units; ``None``
    picks it per solve so the stationary per-node spread is ``noise_rel``
    times the signal scale.  ``t_burn`` / ``t_avg`` of ``None`` mean
    "``burn_relax`` relaxation times" and "adaptive until the predicted
    standard error meets ``eps_x`` with probability ``p_succ``".
    ``eps_mu`` and ``eps_sigma`` are carried for bookkeeping only.
    """

    R: float = 1e3
    C: float = 1e-9
    temperature: float | None = None
    noise_rel: float = 1e-3
    dt: float | None = None
    t_burn: float | None = None
    t_avg: float | None = None
    bits: int = 16
    transfer_rate: float = 1e8
    seed: int = 0
    eps_mu: float = 1e-3
    eps_sigma: float = 1e-3
    eps_x: float = 1e-3
    p_succ: float = 0.95
    integrator: str = "exact"
    quantize: bool = False
    burn_relax: float = 10.0
    samples_per_relax: int = 10
    batch_relax: float = 2.0
    min_batches: int = 8
    max_avg_relax: float = 1e4

    def __post_init__(self):
        if self.R <= 0 or self.C <= 0:
            raise ValueError("R and C must be positive")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("t_burn", "t_avg"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError("bits must be a positive integer")
        if self.transfer_rate <= 0:
            raise ValueError("transfer_rate must be positive")
        if self.integrator not in ("exact", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @property
    def RC(self) -> float:
        return self.R * self.C

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SpuConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown SpuConfig keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TimingEstimate:
    upload_s: float
    analog_s: float
    download_s: float
    total_s: float
    values_transferred: int

    CSV_COLUMNS = ("upload_s", "analog_s", "download_s", "total_s", "values_transferred")

    def to_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_COLUMNS}

    def __add__(self, other: "TimingEstimate") -> "TimingEstimate":
        return TimingEstimate(
            self.upload_s + other.upload_s,
            self.analog_s + other.analog_s,
            self.download_s + other.download_s,
            self.total_s + other.total_s,
            self.values_transferred + other.values_transferred,
        )

    @classmethod
    def zero(cls) -> "TimingEstimate":
        return cls(0.0, 0.0, 0.0, 0.0, 0)


@dataclass
class SpuStats:
    residual: float
    sample_variance: float
    standard_error: float
    temperature: float
    t_burn: float
    t_avg: float
    n_samples: int
    relaxation_time: float
    integrator: str
    clipped_fraction: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CircuitState:
    V: np.ndarray
    G: np.ndarray
    V_in_over_R: np.ndarray
    t: float


@dataclass
class CircuitTrajectory:
    t: np.ndarray
    V: np.ndarray
    G: np.ndarray
    V_in_over_R: np.ndarray

    @property
    def final(self) -> CircuitState:
        return CircuitState(self.V[-1].copy(), self.G, self.V_in_over_R, float(self.t[-1]))


# -- quantization -------------------------------------------------------------


def quantize(values, bits: int, value_range: float) -> tuple[np.ndarray, float]:
    """Uniform midrise quantizer with ``2**bits`` levels over ``[-range, range]``.

    Returns the quantized array and the fraction of entries that were clipped.
    """
    if value_range <= 0:
        raise ValueError("range must be positive")
    values = np.asarray(values, dtype=np.float64)
    levels = 2**bits
    step = 2.0 * value_range / levels
    idx = np.floor((values + value_range) / step)
    clipped = np.abs(values) > value_range
    idx = np.clip(idx, 0, levels - 1)
    out = (idx + 0.5) * step - value_range
    frac = float(np.mean(clipped)) if values.size else 0.0
    return out, frac


def _auto_range(values) -> float:
    peak = float(np.max(np.abs(values))) if np.size(values) else 0.0
    return peak if peak > 0 else 1.0


# -- timing model ---------------------------------------------------------------


def transfer_timing(values_up: int, values_down: int, analog_s: float, config: SpuConfig) -> TimingEstimate:
    # integer bit counts first, one division: matches hand arithmetic exactly
    up = values_up * config.bits / config.transfer_rate
    down = values_down * config.bits / config.transfer_rate
    return TimingEstimate(
        upload_s=up,
        analog_s=analog_s,
        download_s=down,
        total_s=up + analog_s + down,
        values_transferred=int(values_up + values_down),
    )


def default_analog_time(config: SpuConfig) -> float:
    """Analog time priced when burn-in/averaging are adaptive: RC stands in for
    the (problem dependent) relaxation time."""
    t_burn = config.t_burn if config.t_burn is not None else config.burn_relax * config.RC
    t_avg = config.t_avg if config.t_avg is not None else config.burn_relax * config.RC
    return t_burn + t_avg


def estimate_timing(n: int, m: int, iteration_index: int, config: SpuConfig, analog_s: float | None = None) -> TimingEstimate:
    """Modeled wall time of one SPU linear solve inside the interior-point loop.

    Iteration 0 uploads the full ``(2n+m)^2`` matrix; later iterations only the
    ``4n`` changed diagonal entries.  The ``2n+m`` right-hand side goes up and
    the ``2n+m`` solution comes down every time.
    """
    if n < 0 or m < 0:
        raise ValueError("n and m must be non-negative")
    d = 2 * n + m
    matrix_values = d * d if iteration_index == 0 else 4 * n
    if analog_s is None:
        analog_s = default_analog_time(config)
    return transfer_timing(matrix_values + d, d, analog_s, config)


# -- dynamics -------------------------------------------------------------------


def _check_system(M, rhs):
    M = np.asarray(M, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim != 1 or M.shape != (rhs.shape[0], rhs.shape[0]):
        raise DimensionMismatch(f"M {M.shape} incompatible with rhs {rhs.shape}")
    return M, rhs


def relaxation_time(M, config: SpuConfig) -> float:
    """Slowest-mode relaxation time ``RC / alpha_min`` in seconds."""
    M = np.asarray(M, dtype=np.float64)
    alpha_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    if alpha_min <= 0:
        raise NonPositiveEigenvalue(f"smallest eigenvalue {alpha_min:.3e} is not positive")
    return config.RC / alpha_min


def _seed_rng(config: SpuConfig, seed):
    if seed is None:
        seed = config.seed
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _auto_temperature(noise_rel, mean_modal, lam):
    signal = np.linalg.norm(mean_modal) / math.sqrt(len(lam))
    return (noise_rel * signal) ** 2 / float(np.mean(1.0 / lam))


def _modal_samples(w0, mean, a, noise_sd, n, rng):
    """``n`` successive exact OU samples per mode (rows = time)."""
    d = len(a)
    g = rng.standard_normal((n, d)) * noise_sd
    out = np.empty((n, d))
    for j in range(d):
        # w_{k+1} - mean = a (w_k - mean) + g_k
        zi = np.array([a[j] * (w0[j] - mean[j])])
        out[:, j], _ = scipy.signal.lfilter([1.0], [1.0, -a[j]], g[:, j], zi=zi)
    out += mean
    return out


def _batch_se(batch_means: np.ndarray) -> float:
    if batch_means.shape[0] < 2:
        return float("inf")
    var = np.var(batch_means, axis=0, ddof=1) / batch_means.shape[0]
    return float(np.sqrt(np.sum(var)))


def tls_solve(M, rhs, config: SpuConfig | None = None, *, seed=None, block_dims=None, iteration_index: int = 0):
    """Thermodynamic linear solve of ``M x = rhs`` by equilibrate-then-average.

    Parameters
    ----------
    M, rhs : symmetric positive definite matrix and right-hand side
        (any regularization shift is the caller's job).
    config : SpuConfig
    seed : int, Generator or None
        RNG stream for this call (defaults to ``config.seed``).
    block_dims : (n, m) or None
        When the system comes from the interior-point loop, prices uploads
        with the block-diagonal update rule; otherwise the whole matrix is
        priced as a fresh upload.
    iteration_index : int
        Interior-point iteration this solve belongs to (timing only).

    Returns
    -------
    x_bar, TimingEstimate, SpuStats
    """
    config = config or SpuConfig()
    M, rhs = _check_system(M, rhs)
    d = rhs.shape[0]
    rng = _seed_rng(config, seed)
    RC = config.RC

    clipped = 0.0
    if config.quantize:
        M, c1 = quantize(M, config.bits, _auto_range(M))
        rhs, c2 = quantize(rhs, config.bits, _auto_range(rhs))
        clipped = max(c1, c2)

    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    if lam[0] <= 0:
        raise Unstable(
            f"system matrix has eigenvalue {lam[0]:.3e} <= 0; circuit voltages diverge"
        )
    relax_s = 1.0 / lam[0]  # in units of RC
    beta = U.T @ rhs
    mean_modal = beta / lam

    if config.temperature is None:
        kappa0 = _auto_temperature(config.noise_rel, mean_modal, lam)
    else:
        kappa0 = float(config.temperature)

    burn_s = config.t_burn / RC if config.t_burn is not None else config.burn_relax * relax_s
    z_quant = float(scipy.stats.norm.ppf(0.5 * (1.0 + config.p_succ)))

    if config.integrator == "exact":
        x_bar, se, var, n_samples, avg_s = _run_exact(
            lam, mean_modal, kappa0, burn_s, relax_s, config, z_quant, rng
        )
        x_bar = U @ x_bar
    else:
        x_bar, se, var, n_samples, avg_s, burn_s = _run_euler(
            M, rhs, lam, kappa0, burn_s, relax_s, config, z_quant, rng
        )

    if config.quantize:
        x_bar, c3 = quantize(x_bar, config.bits, _auto_range(x_bar))
        clipped = max(clipped, c3)

    analog_s = (burn_s + avg_s) * RC
    if block_dims is not None:
        n, m = block_dims
        if 2 * n + m != d:
            raise DimensionMismatch(f"block_dims {block_dims} inconsistent with d={d}")
        timing = estimate_timing(n, m, iteration_index, config, analog_s=analog_s)
    else:
        up = d * d + d if iteration_index == 0 else d
        timing = transfer_timing(up, d, analog_s, config)

    stats = SpuStats(
        residual=float(np.linalg.norm(M @ x_bar - rhs) / max(np.linalg.norm(rhs), 1e-300)),
        sample_variance=var,
        standard_error=se,
        temperature=kappa0,
        t_burn=burn_s * RC,
        t_avg=avg_s * RC,
        n_samples=n_samples,
        relaxation_time=relax_s * RC,
        integrator=config.integrator,
        clipped_fraction=clipped,
    )
    return x_bar, timing, stats


def _run_exact(lam, mean, kappa0, burn_s, relax_s, config, z_quant, rng):
    d = len(lam)
    # jump straight to the end of burn-in (exact Gaussian transition from V=0)
    a_burn = np.exp(-lam * burn_s)
    w = mean * (1.0 - a_burn)
    if kappa0 > 0:
        w = w + np.sqrt(kappa0 * (1.0 - a_burn**2) / lam) * rng.standard_normal(d)

    h = relax_s / config.samples_per_relax
    a = np.exp(-lam * h)
    sd = np.sqrt(kappa0 * (1.0 - a**2) / lam) if kappa0 > 0 else np.zeros(d)

    if config.t_avg is not None:
        n_total = max(1, int(round(config.t_avg / config.RC / h)))
        acc = np.zeros(d)
        sq = np.zeros(d)
        remaining = n_total
        while remaining:
            take = min(remaining, 200_000 // max(d, 1) + 1)
            block = _modal_samples(w, mean, a, sd, take, rng)
            w = block[-1]
            acc += block.sum(axis=0)
            sq += np.sum((block - mean) ** 2, axis=0)
            remaining -= take
        x_bar = acc / n_total
        # predicted SE of a time average: stationary variance * 2 * relaxation / window
        se = float(np.sqrt(np.sum(kappa0 / lam) * 2.0 * (1.0 / lam.min()) / max(n_total * h, 1e-300)))
        var = float(np.mean(sq / n_total))
        return x_bar, se, var, n_total, n_total * h

    batch_len = max(1, int(round(config.batch_relax * config.samples_per_relax)))
    max_batches = max(config.min_batches, int(config.max_avg_relax / config.batch_relax))
    means = []
    sq_sum = np.zeros(d)
    while True:
        todo = config.min_batches if not means else len(means)  # double each round
        todo = min(todo, max_batches - len(means))
        for _ in range(todo):
            block = _modal_samples(w, mean, a, sd, batch_len, rng)
            w = block[-1]
            means.append(block.mean(axis=0))
            sq_sum += np.sum((block - mean) ** 2, axis=0)
        bm = np.asarray(means)
        x_bar = bm.mean(axis=0)
        se = 0.0 if kappa0 == 0 else _batch_se(bm)
        target = config.eps_x * np.linalg.norm(x_bar)
        if z_quant * se <= target or len(means) >= max_batches:
            break
    n_samples = len(means) * batch_len
    var = float(np.mean(sq_sum / n_samples))
    return x_bar, se, var, n_samples, n_samples * h


def _euler_dt(lam, config):
    dt_s = config.dt / config.RC if config.dt is not None else 0.01
    # keep the explicit scheme stable on the stiffest mode
    return min(dt_s, 0.5 / lam[-1])


def _euler_path(M, rhs, V, dt_s, kappa0, n_steps, rng, chunk=4096):
    """Advance ``n_steps`` Euler-Maruyama steps, yielding blocks of states."""
    d = len(rhs)
    noise_scale = math.sqrt(2.0 * kappa0 * dt_s)
    drive = dt_s * rhs
    done = 0
    while done < n_steps:
        take = min(chunk, n_steps - done)
        g = rng.standard_normal((take, d)) * noise_scale if kappa0 > 0 else np.zeros((take, d))
        out = np.empty((take, d))
        for k in range(take):
            V = V + drive - dt_s * (M @ V) + g[k]
            out[k] = V
        if not np.all(np.isfinite(V)) or np.max(np.abs(V)) > DIVERGENCE_LIMIT:
            raise Unstable("node voltages exceeded 1e12; dynamics diverge")
        done += take
        yield out


def _run_euler(M, rhs, lam, kappa0, burn_s, relax_s, config, z_quant, rng):
    d = len(rhs)
    dt_s = _euler_dt(lam, config)
    V = np.zeros(d)
    n_burn = int(math.ceil(burn_s / dt_s))
    for block in _euler_path(M, rhs, V, dt_s, kappa0, n_burn, rng):
        V = block[-1]
    burn_s = n_burn * dt_s

    if config.t_avg is not None:
        n_total = max(1, int(round(config.t_avg / config.RC / dt_s)))
        acc = np.zeros(d)
        sq = np.zeros(d)
        for block in _euler_path(M, rhs, V, dt_s, kappa0, n_total, rng):
            V = block[-1]
            acc += block.sum(axis=0)
            sq += (block**2).sum(axis=0)
        x_bar = acc / n_total
        var = float(np.mean(sq / n_total - x_bar**2))
        se = float(np.sqrt(max(var, 0.0) * d * 2.0 * relax_s / max(n_total * dt_s, 1e-300)))
        return x_bar, se, var, n_total, n_total * dt_s, burn_s

    batch_steps = max(1, int(round(config.batch_relax * relax_s / dt_s)))
    max_batches = max(config.min_batches, int(config.max_avg_relax / config.batch_relax))
    means = []
    sq = np.zeros(d)
    while True:
        todo = config.min_batches if not means else len(means)
        todo = min(todo, max_batches - len(means))
        for _ in range(todo):
            acc = np.zeros(d)
            for block in _euler_path(M, rhs, V, dt_s, kappa0, batch_steps, rng):
                V = block[-1]
                acc += block.sum(axis=0)
                sq += (block**2).sum(axis=0)
            means.append(acc / batch_steps)
        bm = np.asarray(means)
        x_bar = bm.mean(axis=0)
        se = 0.0 if kappa0 == 0 else _batch_se(bm)
        if z_quant * se <= config.eps_x * np.linalg.norm(x_bar) or len(means) >= max_batches:
            break
    n_total = len(means) * batch_steps
    var = float(np.mean(sq / n_total - x_bar**2))
    return x_bar, se, var, n_total, n_total * dt_s, burn_s


def simulate_circuit(G, R_diag, C_diag, V_in, config: SpuConfig | None = None, *, t_final=None, record_every: int = 1, seed=None, V0=None) -> CircuitTrajectory:
    """Euler-Maruyama integration of ``C dV/dt = -G V + R^{-1} V_in + I_n``.

    Physical units throughout: ``G`` in siemens, ``R_diag`` in ohms,
    ``C_diag`` in farads, times in seconds.  ``config.temperature`` is the
    current-noise intensity ``kappa0`` (noise variance ``2 kappa0``); ``None``
    means noiseless.  ``t_final`` defaults to 20 relaxation times.
    """
    config = config or SpuConfig()
    G = np.asarray(G, dtype=np.float64)
    R_diag = np.asarray(R_diag, dtype=np.float64)
    C_diag = np.asarray(C_diag, dtype=np.float64)
    V_in = np.asarray(V_in, dtype=np.float64)
    d = V_in.shape[0]
    if G.shape != (d, d) or R_diag.shape != (d,) or C_diag.shape != (d,):
        raise DimensionMismatch("G, R_diag, C_diag and V_in sizes disagree")
    if np.any(R_diag <= 0) or np.any(C_diag <= 0):
        raise ValueError("R_diag and C_diag must be positive")
    rng = _seed_rng(config, seed)
    drive = V_in / R_diag
    sc = 1.0 / np.sqrt(C_diag)
    rates = np.linalg.eigvalsh(sc[:, None] * (0.5 * (G + G.T)) * sc[None, :])
    if rates[0] <= 0:
        raise Unstable("conductance matrix is not positive definite")
    relax = 1.0 / rates[0]
    dt = config.dt if config.dt is not None else config.RC / 100.0
    dt = min(dt, 0.5 / rates[-1])
    if t_final is None:
        t_final = 20.0 * relax
    n_steps = int(math.ceil(t_final / dt))
    kappa0 = config.temperature or 0.0
    inv_c = 1.0 / C_diag
    noise = inv_c * math.sqrt(2.0 * kappa0 * dt)

    V = np.zeros(d) if V0 is None else np.array(V0, dtype=np.float64)
    times = [0.0]
    states = [V.copy()]
    for k in range(1, n_steps + 1):
        V = V + dt * inv_c * (drive - G @ V)
        if kappa0 > 0:
            V += noise * rng.standard_normal(d)
        if k % record_every == 0 or k == n_steps:
            if not np.all(np.isfinite(V)) or np.max(np.abs(V)) > DIVERGENCE_LIMIT:
                raise Unstable("node voltages exceeded 1e12; dynamics diverge")
            times.append(k * dt)
            states.append(V.copy())
    return CircuitTrajectory(t=np.asarray(times), V=np.asarray(states), G=G, V_in_over_R=drive)
