"""Linear SVM training through the dual quadratic program.

The dual solved here is

    minimize    1/2 a^T (Y X X^T Y + lam I) a - 1^T a
    subject to  y^T a = 0,  a >= 0

The ``lam I`` term turns the hard-margin dual into the squared-hinge soft
margin, so the problem stays bounded on non-separable data.  For support
vectors the margin then satisfies ``y_i (w^T x_i + b) = 1 - lam * a_i``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import DegenerateLabels, DimensionMismatch, ParseError
from ..ipm import IpmConfig, SolveReport, solve
from ..qp_core import QpProblem

SUPPORT_REL_TOL = 1e-5


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
        if self.points.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch(
                f"{self.points.shape[0]} points but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]


@dataclass
class SvmModel:
    alpha: np.ndarray
    w: np.ndarray
    bias: float
    support_indices: np.ndarray
    lambda_reg: float
    train_accuracy: float
    report: SolveReport | None = None


def _check_labels(dataset: LabeledDataset):
    if dataset.size < 2 or len(np.unique(dataset.labels)) < 2:
        raise DegenerateLabels("training needs at least one point of each class")


def build_svm_qp(dataset: LabeledDataset, lambda_reg: float = 0.1) -> QpProblem:
    _check_labels(dataset)
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be non-negative")
    yx = dataset.labels[:, None] * dataset.points
    Q = yx @ yx.T + lambda_reg * np.eye(dataset.size)
    return QpProblem(
        Q=Q,
        c=-np.ones(dataset.size),
        A=dataset.labels[None, :],
        b=np.zeros(1),
    )


def train_svm(dataset: LabeledDataset, config: IpmConfig | None = None, lambda_reg: float = 0.1) -> SvmModel:
    """Solve the dual with the interior-point method and recover ``(w, b)``."""
    problem = build_svm_qp(dataset, lambda_reg)
    report = solve(problem, config)
    alpha = report.x_star
    y, X = dataset.labels, dataset.points
    w = (alpha * y) @ X
    # a multiplier still above its slack has not been driven to zero: support vector
    support = np.flatnonzero((alpha > SUPPORT_REL_TOL * alpha.max()) & (alpha > report.z))
    if support.size == 0:
        support = np.flatnonzero(alpha > SUPPORT_REL_TOL * alpha.max())
    # every support vector satisfies b = y_i (1 - lam a_i) - w^T x_i at the optimum;
    # weighting by a_i keeps barely-positive (unconverged) multipliers from biasing b
    margins = y[support] * (1.0 - lambda_reg * alpha[support]) - X[support] @ w
    bias = float(alpha[support] @ margins / alpha[support].sum())
    model = SvmModel(
        alpha=alpha,
        w=w,
        bias=bias,
        support_indices=support,
        lambda_reg=lambda_reg,
        train_accuracy=0.0,
        report=report,
    )
    model.train_accuracy = accuracy(model, dataset)
    return model


def decision_function(model: SvmModel, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != model.w.shape[0]:
        raise DimensionMismatch(f"expected {model.w.shape[0]} features, got {points.shape[1]}")
    return points @ model.w + model.bias


def predict(model: SvmModel, points) -> np.ndarray:
    """``sign(w^T x + b)`` with ties sent to +1."""
    return np.where(decision_function(model, points) >= 0.0, 1.0, -1.0)


def accuracy(model: SvmModel, dataset: LabeledDataset) -> float:
    return float(np.mean(predict(model, dataset.points) == dataset.labels))


# -- data helpers -----------------------------------------------------------------


def augment(dataset: LabeledDataset, factor: int, sigma: float, rng) -> LabeledDataset:
    """Stack ``factor`` copies of the data; every copy after the first is jittered."""
    if factor < 1:
        raise ValueError("augment factor must be >= 1")
    rng = np.random.default_rng(rng)
    copies = [dataset.points]
    for _ in range(factor - 1):
        copies.append(dataset.points + sigma * rng.standard_normal(dataset.points.shape))
    return LabeledDataset(np.vstack(copies), np.tile(dataset.labels, factor))


def make_blobs(size: int, n_features: int = 2, separation: float = 2.0, spread: float = 1.0, rng=None) -> LabeledDataset:
    """Two Gaussian clouds centred at ``+-separation/2`` along every axis."""
    rng = np.random.default_rng(rng)
    labels = np.where(np.arange(size) % 2 == 0, 1.0, -1.0)
    centers = labels[:, None] * (separation / 2.0) * np.ones(n_features) / np.sqrt(n_features)
    points = centers + spread * rng.standard_normal((size, n_features))
    return LabeledDataset(points, labels)


def standardize(dataset: LabeledDataset) -> LabeledDataset:
    mu = dataset.points.mean(axis=0)
    sd = dataset.points.std(axis=0)
    sd[sd == 0] = 1.0
    return replace(dataset, points=(dataset.points - mu) / sd)


def load_dataset(path) -> LabeledDataset:
    """Read a CSV with a header row whose last column is ``label``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty dataset file") from None
        if not header or header[-1].strip() != "label":
            raise ParseError("last column must be named 'label'", field="label", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(row)}", line=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    if not rows:
        raise ParseError("dataset has no rows")
    data = np.asarray(rows)
    return LabeledDataset(data[:, :-1], data[:, -1])


def save_dataset(dataset: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.n_features)] + ["label"])
        for row, label in zip(dataset.points, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
