"""Newton system of the interior-point iteration and its symmetrized form.

Variable ordering everywhere is ``r = (x, y, z)`` with block offsets
``0:n``, ``n:n+m`` and ``n+m:2n+m``.  The Jacobian is

    J = [[-Q, A^T, I],
         [ A,  0,  0],
         [ Z,  0,  X]]

and the normal matrix ``Jt = J^T J + lambda I`` has the block form

    [[Q^T Q + A^T A + Z^2,  -Q^T A^T,  -Q^T + XZ],
     [-A Q,                  A A^T,     A       ],
     [-Q + XZ,               A^T,       I + X^2 ]]

Only the three diagonal-matrix terms (Z^2, X^2, XZ) depend on the iterate,
so after the first build every refresh touches O(n) entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, StaleCache
from .qp_core import IterateState, QpProblem, _check_state


@dataclass
class KktSystem:
    J: np.ndarray
    v: np.ndarray
    sigma: float
    x: np.ndarray
    z: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.J.shape[0]


def build_rhs(problem: QpProblem, state: IterateState, sigma: float) -> np.ndarray:
    """Newton right-hand side with complementarity target ``sigma * x^T z / n``."""
    _check_state(problem, state)
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    x, y, z = state.x, state.y, state.z
    mu = float(x @ z) / x.shape[0]
    return np.concatenate(
        [
            problem.Q @ x - problem.A.T @ y - z + problem.c,
            problem.b - problem.A @ x,
            -x * z + mu * sigma,
        ]
    )


def build_jacobian(problem: QpProblem, state: IterateState, sigma: float = 0.1) -> KktSystem:
    _check_state(problem, state)
    n, m = problem.n, problem.m
    d = 2 * n + m
    J = np.zeros((d, d))
    J[:n, :n] = -problem.Q
    J[:n, n : n + m] = problem.A.T
    J[:n, n + m :] = np.eye(n)
    J[n : n + m, :n] = problem.A
    idx = np.arange(n)
    J[n + m + idx, idx] = state.z
    J[n + m + idx, n + m + idx] = state.x
    return KktSystem(
        J=J,
        v=build_rhs(problem, state, sigma),
        sigma=sigma,
        x=state.x.copy(),
        z=state.z.copy(),
    )


def update_jacobian(ksys: KktSystem, problem: QpProblem, state: IterateState) -> None:
    """Rewrite the Z and X diagonals and recompute ``v`` in place."""
    n, m = problem.n, problem.m
    if ksys.n != n or ksys.dim != 2 * n + m:
        raise StaleCache("KKT system was built for a different problem size")
    idx = np.arange(n)
    ksys.J[n + m + idx, idx] = state.z
    ksys.J[n + m + idx, n + m + idx] = state.x
    ksys.x = state.x.copy()
    ksys.z = state.z.copy()
    ksys.v = build_rhs(problem, state, ksys.sigma)


def build_normal_rhs(ksys: KktSystem) -> np.ndarray:
    if ksys.v.shape != (ksys.dim,):
        raise DimensionMismatch(f"v has shape {ksys.v.shape}, expected ({ksys.dim},)")
    return ksys.J.T @ ksys.v


class NormalSystem:
    """``J^T J + lambda I`` with the iterate-independent blocks cached.

    Not thread safe: :meth:`update` mutates ``Jt`` in place.  ``writes`` counts
    scalar stores made by the most recent update.
    """

    def __init__(self, problem: QpProblem, state: IterateState, lambda_reg: float = 0.0):
        _check_state(problem, state)
        if lambda_reg < 0:
            raise ValueError("lambda_reg must be non-negative")
        n, m = problem.n, problem.m
        self.n, self.m = n, m
        self.lambda_reg = float(lambda_reg)
        Q, A = problem.Q, problem.A
        # constant blocks, computed once
        self.QtQ_AtA = Q.T @ Q + A.T @ A
        self.QtAt = Q.T @ A.T
        self.AQ = A @ Q
        self.AAt = A @ A.T
        self.Q = Q
        self.At = A.T
        self.prev_x = state.x.copy()
        self.prev_z = state.z.copy()
        self.writes = 0
        self.total_writes = 0
        self.Jt = self._assemble(state.x, state.z)

    @property
    def dim(self) -> int:
        return 2 * self.n + self.m

    def _assemble(self, x, z) -> np.ndarray:
        n, m = self.n, self.m
        s1, s2, s3 = slice(0, n), slice(n, n + m), slice(n + m, 2 * n + m)
        xz = np.diag(x * z)
        Jt = np.empty((self.dim, self.dim))
        Jt[s1, s1] = self.QtQ_AtA + np.diag(z * z)
        Jt[s1, s2] = -self.QtAt
        Jt[s1, s3] = -self.Q.T + xz
        Jt[s2, s1] = -self.AQ
        Jt[s2, s2] = self.AAt
        Jt[s2, s3] = self.At.T
        Jt[s3, s1] = -self.Q + xz
        Jt[s3, s2] = self.At
        Jt[s3, s3] = np.eye(n) + np.diag(x * x)
        Jt[np.diag_indices(self.dim)] += self.lambda_reg
        return Jt

    def rebuild(self, state: IterateState) -> np.ndarray:
        """From-scratch assembly for ``state`` (does not modify ``self.Jt``)."""
        return self._assemble(state.x, state.z)

    def update(self, state: IterateState) -> None:
        """Delta-update the X/Z-dependent diagonals to ``state``."""
        n, m = self.n, self.m
        if state.x.shape != (n,) or state.z.shape != (n,) or state.y.shape != (m,):
            raise StaleCache("state dimensions differ from the cached normal system")
        x, z = state.x, state.z
        px, pz = self.prev_x, self.prev_z
        idx = np.arange(n)
        off = n + m
        Jt = self.Jt
        Jt[idx, idx] += z * z - pz * pz
        Jt[off + idx, off + idx] += x * x - px * px
        dxz = x * z - px * pz
        Jt[idx, off + idx] += dxz
        Jt[off + idx, idx] += dxz
        self.writes = 4 * n
        self.total_writes += self.writes
        self.prev_x = x.copy()
        self.prev_z = z.copy()


def build_normal_system(problem: QpProblem, state: IterateState, lambda_reg: float = 0.0) -> NormalSystem:
    return NormalSystem(problem, state, lambda_reg)


def update_normal_system(ns: NormalSystem, state_new: IterateState) -> NormalSystem:
    ns.update(state_new)
    return ns
