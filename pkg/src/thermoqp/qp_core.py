"""Quadratic program representation and closed-form special cases.

Problems are stored in the standard form

    minimize    1/2 x^T Q x + c^T x
    subject to  A x = b,  x >= 0

The two closed-form helpers (:func:`solve_unconstrained` and
:func:`solve_equality_constrained`) follow the *potential* convention
``V(x) = 1/2 x^T Q x - c^T x`` used when a problem is loaded onto a physical
system, i.e. they solve ``Q x = c`` and the saddle system
``[[Q, A^T], [A, 0]] (x, lam) = (c, b)``.  Use :meth:`QpProblem.as_potential`
to convert a standard-form problem before calling them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, ParseError, SingularMatrix

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
RANK_TOL = 1e-10


def _as_matrix(value, name):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _as_vector(value, name):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class QpProblem:
    """The quadruple (Q, A, b, c) with ``n`` variables and ``m`` equality rows.

    ``A`` and ``b`` may be omitted for problems without equality constraints;
    they are then stored as a ``(0, n)`` matrix and an empty vector.
    """

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        c = _as_vector(self.c, "c")
        n = c.shape[0]
        if n < 1:
            raise DimensionMismatch("problem needs at least one variable")
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(n, n)}")
        if self.A is None:
            A = np.zeros((0, n))
        else:
            A = np.array(self.A, dtype=np.float64)
            if A.size == 0:
                A = A.reshape(0, n)
            if A.ndim != 2 or A.shape[1] != n:
                raise DimensionMismatch(f"A has shape {A.shape}, expected (m, {n})")
        m = A.shape[0]
        if self.b is None:
            if m:
                raise DimensionMismatch("b is required when A has rows")
            b = np.zeros(0)
        else:
            b = _as_vector(self.b, "b") if np.size(self.b) else np.zeros(0)
            if b.shape != (m,):
                raise DimensionMismatch(f"b has length {b.shape[0]}, expected {m}")
        for arr in (Q, A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def as_potential(self) -> "QpProblem":
        """Return the same problem with ``c`` negated.

        The standard form minimizes ``+c^T x``; the closed-form solvers and the
        physical potential use ``-c^T x``.
        """
        return QpProblem(Q=self.Q, c=-self.c, A=self.A, b=self.b)

    def __eq__(self, other):
        if not isinstance(other, QpProblem):
            return NotImplemented
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(
                (self.Q, self.A, self.b, self.c), (other.Q, other.A, other.b, other.c)
            )
        )

    __hash__ = None


@dataclass
class IterateState:
    """Primal/dual/slack triple of an interior-point iterate plus its barrier."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mu: float = field(default=float("nan"))
    k: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        if math.isnan(self.mu):
            self.mu = self.complementarity()

    def complementarity(self) -> float:
        return float(self.x @ self.z) / self.x.shape[0]

    def is_interior(self) -> bool:
        return bool(np.all(self.x > 0) and np.all(self.z > 0))

    def copy(self) -> "IterateState":
        return IterateState(self.x.copy(), self.y.copy(), self.z.copy(), self.mu, self.k)


@dataclass(frozen=True)
class Residuals:
    xi_p: np.ndarray
    xi_d: np.ndarray
    comp: float

    @property
    def primal_norm(self) -> float:
        return float(np.linalg.norm(self.xi_p))

    @property
    def dual_norm(self) -> float:
        return float(np.linalg.norm(self.xi_d))


@dataclass(frozen=True)
class ValidationReport:
    symmetry_defect: float
    is_symmetric: bool
    min_eigenvalue: float
    is_psd: bool
    rank_A: int
    full_rank: bool
    dims_ok: bool

    @property
    def valid(self) -> bool:
        return self.is_symmetric and self.is_psd and self.full_rank and self.dims_ok


def _check_state(problem: QpProblem, state: IterateState):
    n, m = problem.n, problem.m
    if state.x.shape != (n,) or state.z.shape != (n,) or state.y.shape != (m,):
        raise DimensionMismatch(
            f"state shapes x{state.x.shape} y{state.y.shape} z{state.z.shape} "
            f"do not match n={n}, m={m}"
        )


def matrix_rank(A: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Numerical rank from a column-pivoted QR factorization."""
    if A.size == 0:
        return 0
    R = scipy.linalg.qr(A, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(A, 2)
    if scale == 0.0:
        return 0
    return int(np.sum(diag > rel_tol * scale))


def validate(problem: QpProblem) -> ValidationReport:
    """Check the standing assumptions of the standard form.

    Dimension problems are caught at construction time; this adds the
    numerical checks (symmetry, positive semidefiniteness, rank of ``A``)
    that cost O(n^3) and are therefore only run on request.
    """
    Q = problem.Q
    defect = float(np.max(np.abs(Q - Q.T))) if Q.size else 0.0
    sym = 0.5 * (Q + Q.T)
    min_eig = float(np.linalg.eigvalsh(sym)[0])
    qnorm = float(np.linalg.norm(sym, 2))
    rank = matrix_rank(problem.A)
    return ValidationReport(
        symmetry_defect=defect,
        is_symmetric=defect <= SYMMETRY_TOL,
        min_eigenvalue=min_eig,
        is_psd=min_eig >= -PSD_TOL * max(qnorm, 1e-300),
        rank_A=rank,
        full_rank=rank == problem.m,
        dims_ok=problem.m <= problem.n,
    )


def objective(problem: QpProblem, x) -> float:
    """Standard-form objective 1/2 x^T Q x + c^T x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({problem.n},)")
    return float(0.5 * x @ (problem.Q @ x) + problem.c @ x)


def residuals(problem: QpProblem, state: IterateState) -> Residuals:
    _check_state(problem, state)
    xi_p = problem.b - problem.A @ state.x
    xi_d = problem.c - problem.A.T @ state.y - state.z + problem.Q @ state.x
    return Residuals(xi_p=xi_p, xi_d=xi_d, comp=state.complementarity())


def _solve_checked(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            # an exactly singular pivot is reported below as SingularMatrix
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularMatrix(str(exc)) from exc
    scale = np.linalg.norm(M, np.inf)
    if scale == 0.0 or np.min(np.abs(np.diag(lu))) <= 1e-14 * scale:
        raise SingularMatrix("matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), rhs)


def solve_unconstrained(problem: QpProblem) -> np.ndarray:
    """Minimizer of ``1/2 x^T Q x - c^T x``, i.e. the solution of ``Q x = c``."""
    if problem.m and np.any(problem.A):
        raise ValueError("problem has equality constraints; use solve_equality_constrained")
    return _solve_checked(problem.Q, problem.c)


def solve_equality_constrained(problem: QpProblem) -> tuple[np.ndarray, np.ndarray]:
    """Solve the Lagrange saddle system ``[[Q, A^T], [A, 0]] (x, lam) = (c, b)``.

    Returns ``(x, lam)``; ``x`` minimizes ``1/2 x^T Q x - c^T x`` on ``A x = b``.
    """
    n, m = problem.n, problem.m
    K = np.zeros((n + m, n + m))
    K[:n, :n] = problem.Q
    K[:n, n:] = problem.A.T
    K[n:, :n] = problem.A
    sol = _solve_checked(K, np.concatenate([problem.c, problem.b]))
    return sol[:n], sol[n:]


# -- file I/O ---------------------------------------------------------------


def problem_to_dict(problem: QpProblem) -> dict:
    data = {"n": problem.n, "m": problem.m, "Q": problem.Q.tolist()}
    if problem.m:
        data["A"] = problem.A.tolist()
        data["b"] = problem.b.tolist()
    data["c"] = problem.c.tolist()
    return data


def problem_from_dict(data) -> QpProblem:
    if not isinstance(data, dict):
        raise ParseError("problem must be a JSON object")
    for key in ("n", "m", "Q", "c"):
        if key not in data:
            raise ParseError(f"missing required field {key!r}", field=key)
    n, m = data["n"], data["m"]
    for key, val in (("n", n), ("m", m)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise ParseError("must be a non-negative integer", field=key)
    if m and ("A" not in data or "b" not in data):
        missing = "A" if "A" not in data else "b"
        raise ParseError(f"missing required field {missing!r}", field=missing)
    arrays = {}
    for key in ("Q", "A", "b", "c"):
        if key not in data:
            continue
        try:
            arrays[key] = np.array(data[key], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"not a numeric array: {exc}", field=key) from exc
    expected = {"Q": (n, n), "c": (n,), "A": (m, n), "b": (m,)}
    for key, arr in arrays.items():
        if key in ("A", "b") and m == 0 and arr.size == 0:
            continue
        if arr.shape != expected[key]:
            raise DimensionMismatch(
                f"field {key!r} has shape {arr.shape}, expected {expected[key]}"
            )
    return QpProblem(
        Q=arrays["Q"],
        c=arrays["c"],
        A=arrays.get("A") if m else None,
        b=arrays.get("b") if m else None,
    )


def load_problem(path) -> QpProblem:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return problem_from_dict(data)


def save_problem(problem: QpProblem, path) -> None:
    # json emits repr(float), which round-trips IEEE doubles exactly
    Path(path).write_text(json.dumps(problem_to_dict(problem)))
