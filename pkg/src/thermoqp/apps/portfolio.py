"""Long-only mean-variance allocation with a minimum expected return."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, InfeasibleTarget
from ..ipm import IpmConfig, SolveReport, solve
from ..qp_core import QpProblem


@dataclass
class PortfolioSpec:
    returns: np.ndarray
    covariance: np.ndarray
    target_return: float

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=np.float64).ravel()
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        N = self.returns.shape[0]
        if N < 1:
            raise ValueError("need at least one asset")
        if self.covariance.shape != (N, N):
            raise DimensionMismatch(f"covariance {self.covariance.shape} vs {N} assets")
        if np.max(np.abs(self.covariance - self.covariance.T)) > 1e-10:
            raise ValueError("covariance must be symmetric")


@dataclass
class PortfolioResult:
    weights: np.ndarray
    slack: float
    expected_return: float
    variance: float
    report: SolveReport


def build_portfolio_qp(spec: PortfolioSpec) -> QpProblem:
    """Variables ``(x_1..x_N, s)`` with ``r^T x - s = R`` and ``1^T x = 1``."""
    N = spec.returns.shape[0]
    Q = np.zeros((N + 1, N + 1))
    Q[:N, :N] = spec.covariance
    A = np.zeros((2, N + 1))
    A[0, :N] = spec.returns
    A[0, N] = -1.0
    A[1, :N] = 1.0
    return QpProblem(Q=Q, c=np.zeros(N + 1), A=A, b=np.array([spec.target_return, 1.0]))


def solve_portfolio(spec: PortfolioSpec, config: IpmConfig | None = None) -> PortfolioResult:
    """Minimum-variance allocation meeting the target return.

    Raises :class:`InfeasibleTarget` (with ``.result`` attached) when the
    target exceeds every asset's return.
    """
    if config is None:
        # variances are often ~1e-4, far below the default tolerances; the tiny
        # shift keeps the normal matrix factorizable when the target equals the
        # best return and the feasible set collapses to a single vertex
        config = IpmConfig(eps_p=1e-10, eps_d=1e-10, eps_o=1e-10, lambda_reg=1e-12)
    report = solve(build_portfolio_qp(spec), config)
    N = spec.returns.shape[0]
    x = report.x_star[:N]
    result = PortfolioResult(
        weights=x,
        slack=float(report.x_star[N]),
        expected_return=float(spec.returns @ x),
        variance=float(x @ spec.covariance @ x),
        report=report,
    )
    if spec.target_return > spec.returns.max():
        exc = InfeasibleTarget(
            f"target return {spec.target_return} exceeds the best asset return {spec.returns.max()}"
        )
        exc.result = result
        raise exc
    return result
