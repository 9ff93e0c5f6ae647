"""Two-class LDA, logistic regression and kNN on flattened shape variables,
with in-sample k selection and confusion-matrix metrics.

Labels are arbitrary strings; one of them is the positive class (SAM or
group-1 in this package's data), which fixes the orientation of
sensitivity and specificity.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateLabelsError,
    InvalidInputError,
    RankDeficiencyWarning,
    SeparationWarning,
    SmallSampleWarning,
)

POSITIVE_DEFAULTS = ("SAM", "group-1")

LR_MAX_ITER = 100
LR_TOL = 1e-10
LR_SEPARATION_BOUND = 1e6
LR_RIDGE = 1e-6
# log-likelihood this close to 0 means every point is fitted with certainty:
# complete separation, where IRLS may stall before the coefficient bound
LR_SEPARATION_LL = 1e-6


class ClassifierKind(str, enum.Enum):
    LDA = "lda"
    LR = "lr"
    KNN = "knn"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            low = value.lower()
            for member in cls:
                if member.value == low:
                    return member
        return None


def _sigmoid(t):
    # split by sign to avoid overflow in exp
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def resolve_labels(labels: Sequence, positive_label=None) -> tuple[str, str]:
    """Return ``(negative, positive)`` for a two-class label vector."""
    classes = sorted({str(lab) for lab in labels})
    if len(classes) < 2:
        raise DegenerateLabelsError(
            f"training labels contain a single class {classes!r}; two are required"
        )
    if len(classes) > 2:
        raise DegenerateLabelsError(f"only two classes are supported, got {classes!r}")
    if positive_label is None:
        positive_label = next((p for p in POSITIVE_DEFAULTS if p in classes), classes[0])
    positive_label = str(positive_label)
    if positive_label not in classes:
        raise InvalidInputError(f"positive label {positive_label!r} not among {classes!r}")
    negative = classes[0] if classes[1] == positive_label else classes[1]
    return negative, positive_label


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    negative_label: str
    positive_label: str

    kind = None

    @property
    def classes(self) -> tuple[str, str]:
        return (self.negative_label, self.positive_label)

    @property
    def p(self) -> int:
        raise NotImplementedError

    def scores(self, X) -> np.ndarray:
        """Positive-class score for each row of ``X``."""
        raise NotImplementedError

    def predict_many(self, X) -> np.ndarray:
        s = self.scores(X)
        return np.where(s >= 0.5, self.positive_label, self.negative_label)

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.p:
            raise InvalidInputError(f"expected {self.p} variables, got {X.shape[1]}")
        return X


@dataclass(frozen=True, eq=False)
class LdaModel(ClassifierModel):
    #: rows ordered (negative, positive)
    means: np.ndarray = None
    #: inverse (or pseudo-inverse) of the pooled within-class covariance
    precision: np.ndarray = None
    #: (negative, positive) prior probabilities
    priors: np.ndarray = None
    covariance: np.ndarray | None = None
    rank: int | None = None

    kind = ClassifierKind.LDA

    def __post_init__(self):
        mu0, mu1 = self.means
        w = self.precision @ (mu1 - mu0)
        b = -0.5 * (mu1 + mu0) @ w + math.log(self.priors[1] / self.priors[0])
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_b", float(b))

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def discriminant(self, X) -> np.ndarray:
        return self._check(X) @ self._w + self._b

    def scores(self, X) -> np.ndarray:
        return _sigmoid(self.discriminant(X))

    def predict_many(self, X) -> np.ndarray:
        d = self.discriminant(X)
        return np.where(d >= 0, self.positive_label, self.negative_label)


@dataclass(frozen=True, eq=False)
class LogisticModel(ClassifierModel):
    #: intercept first, then one coefficient per variable
    coefficients: np.ndarray = None
    ridge: float = 0.0
    separated: bool = False
    iterations: int = 0

    kind = ClassifierKind.LR

    @property
    def p(self) -> int:
        return self.coefficients.size - 1

    def linear_predictor(self, X) -> np.ndarray:
        return self._check(X) @ self.coefficients[1:] + self.coefficients[0]

    def scores(self, X) -> np.ndarray:
        return _sigmoid(self.linear_predictor(X))

    def predict_many(self, X) -> np.ndarray:
        eta = self.linear_predictor(X)
        return np.where(eta >= 0, self.positive_label, self.negative_label)


@dataclass(frozen=True, eq=False)
class KnnModel(ClassifierModel):
    training: np.ndarray = None
    #: True where the training label is the positive class
    is_positive: np.ndarray = None
    k: int = 5

    kind = ClassifierKind.KNN

    @property
    def p(self) -> int:
        return self.training.shape[1]

    def scores(self, X) -> np.ndarray:
        X = self._check(X)
        d2 = (
            np.sum(X**2, axis=1)[:, None]
            - 2.0 * X @ self.training.T
            + np.sum(self.training**2, axis=1)[None, :]
        )
        # stable sort: equal distances resolved by training order
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.is_positive[nearest].mean(axis=1)


def _pooled_covariance(X, y_pos):
    mu0 = X[~y_pos].mean(axis=0)
    mu1 = X[y_pos].mean(axis=0)
    resid = np.where(y_pos[:, None], X - mu1, X - mu0)
    return np.stack([mu0, mu1]), resid.T @ resid / (X.shape[0] - 2)


def covariance_rank(X, labels) -> int:
    """Rank of the pooled within-class covariance of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray([str(lab) for lab in labels])
    first = labels[0]
    _, cov = _pooled_covariance(X, labels != first)
    return int(np.linalg.matrix_rank(cov, hermitian=True))


def _train_lda(X, y_pos, neg, pos, expected_rank):
    n, p = X.shape
    means, cov = _pooled_covariance(X, y_pos)
    rank = int(np.linalg.matrix_rank(cov, hermitian=True))
    if rank < p:
        precision = np.linalg.pinv(cov, rcond=p * np.finfo(float).eps, hermitian=True)
        expected = p if expected_rank is None else expected_rank
        if rank < expected:
            warnings.warn(
                f"pooled covariance has rank {rank} < {expected}; using pseudo-inverse",
                RankDeficiencyWarning,
                stacklevel=3,
            )
    else:
        precision = np.linalg.inv(cov)
    n1 = int(y_pos.sum())
    priors = np.array([(n - n1) / n, n1 / n])
    return LdaModel(neg, pos, means=means, precision=precision, priors=priors,
                    covariance=cov, rank=rank)


def _min_norm_solve(sym, rhs):
    # pseudo-inverse solve for a symmetric PSD matrix; exact collinearities
    # (aligned coordinates against the intercept) get a zero step
    evals, evecs = np.linalg.eigh(sym)
    cutoff = sym.shape[0] * np.finfo(float).eps * max(float(evals[-1]), 0.0)
    inv = np.where(evals > cutoff, 1.0 / np.where(evals > cutoff, evals, 1.0), 0.0)
    return evecs @ (inv * (evecs.T @ rhs))


def _irls(Xd, y, ridge):
    n, q = Xd.shape
    beta = np.zeros(q)
    penalty = np.full(q, ridge)
    penalty[0] = 0.0
    ll_prev = -math.inf
    it = 0
    for it in range(1, LR_MAX_ITER + 1):
        eta = Xd @ beta
        mu = _sigmoid(eta)
        w = mu * (1.0 - mu)
        grad = Xd.T @ (y - mu) - penalty * beta
        hess = (Xd * w[:, None]).T @ Xd + np.diag(penalty)
        step = _min_norm_solve(hess, grad)
        beta = beta + step
        eta = Xd @ beta
        # log-likelihood written with logaddexp for stability
        ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * np.sum(penalty * beta**2))
        if abs(ll - ll_prev) < LR_TOL:
            break
        ll_prev = ll
    return beta, it, ll


def _train_lr(X, y_pos, neg, pos):
    Xd = np.column_stack([np.ones(X.shape[0]), X])
    y = y_pos.astype(np.float64)
    beta, it, ll = _irls(Xd, y, 0.0)
    if (not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > LR_SEPARATION_BOUND
            or ll > -LR_SEPARATION_LL):
        warnings.warn(
            "logistic fit diverged (separation); refitting with ridge penalty "
            f"{LR_RIDGE:g}",
            SeparationWarning,
            stacklevel=3,
        )
        beta, it, _ = _irls(Xd, y, LR_RIDGE)
        return LogisticModel(neg, pos, coefficients=beta, ridge=LR_RIDGE,
                             separated=True, iterations=it)
    return LogisticModel(neg, pos, coefficients=beta, iterations=it)


def _train_knn(X, y_pos, neg, pos, k):
    if k is None:
        raise InvalidInputError("kNN needs k (use select_k to choose one)")
    k = int(k)
    if not 1 <= k <= X.shape[0]:
        raise InvalidInputError(f"k={k} outside 1..{X.shape[0]}")
    train = X.copy()
    train.setflags(write=False)
    flags = y_pos.copy()
    flags.setflags(write=False)
    return KnnModel(neg, pos, training=train, is_positive=flags, k=k)


def train(
    kind,
    X,
    labels,
    positive_label=None,
    k: int | None = None,
    expected_rank: int | None = None,
) -> ClassifierModel:
    """Fit a two-class rule on the rows of ``X``.

    ``expected_rank`` is the covariance rank the caller considers normal for
    its variables (aligned coordinates lose a few exact degrees of freedom);
    LDA only warns when the rank falls below it.
    """
    kind = ClassifierKind(kind)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError("X must be a 2-D array")
    labels = [str(lab) for lab in labels]
    if len(labels) != X.shape[0]:
        raise InvalidInputError("one label per row of X is required")
    neg, pos = resolve_labels(labels, positive_label)
    y_pos = np.array([lab == pos for lab in labels])
    n, p = X.shape
    if kind is not ClassifierKind.KNN and n < p + 2:
        warnings.warn(f"n={n} is small for p={p} variables", SmallSampleWarning, stacklevel=2)
    if kind is ClassifierKind.LDA:
        return _train_lda(X, y_pos, neg, pos, expected_rank)
    if kind is ClassifierKind.LR:
        return _train_lr(X, y_pos, neg, pos)
    return _train_knn(X, y_pos, neg, pos, k)


def predict(model: ClassifierModel, x) -> tuple[str, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("predict takes a single vector; use scores() for batches")
    label = model.predict_many(x[None])[0]
    return str(label), float(model.scores(x[None])[0])


def select_k(X, labels, k_candidates: Sequence[int], positive_label=None) -> int:
    """Candidate k with the best in-sample (train = test) accuracy; ties go to
    the smaller k."""
    cands = sorted({int(c) for c in k_candidates})
    if not cands:
        raise InvalidInputError("k_candidates is empty")
    labels = np.asarray([str(lab) for lab in labels])
    best_k, best_acc = None, -1.0
    for k in cands:
        model = train("knn", X, labels, positive_label=positive_label, k=k)
        acc = float(np.mean(model.predict_many(X) == labels))
        if acc > best_acc:
            best_k, best_acc = k, acc
    return best_k


@dataclass(frozen=True)
class ClassificationMetrics:
    tp: int
    fn: int
    tn: int
    fp: int
    accuracy: float = field(init=False)
    sensitivity: float = field(init=False)
    specificity: float = field(init=False)

    def __post_init__(self):
        n = self.tp + self.fn + self.tn + self.fp
        if n == 0:
            raise InvalidInputError("no predictions to score")
        object.__setattr__(self, "accuracy", (self.tp + self.tn) / n)
        object.__setattr__(
            self, "sensitivity", self.tp / (self.tp + self.fn) if self.tp + self.fn else math.nan
        )
        object.__setattr__(
            self, "specificity", self.tn / (self.tn + self.fp) if self.tn + self.fp else math.nan
        )

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    def as_row(self) -> dict:
        return {"Acc": self.accuracy, "Sens": self.sensitivity, "Spec": self.specificity}


def metrics(predictions, truth, positive_label) -> ClassificationMetrics:
    pred = np.asarray([str(v) for v in predictions])
    true = np.asarray([str(v) for v in truth])
    if pred.size == 0:
        raise InvalidInputError("empty predictions")
    if pred.shape != true.shape:
        raise InvalidInputError("predictions and truth differ in length")
    pos = str(positive_label)
    tp = int(np.sum((pred == pos) & (true == pos)))
    fn = int(np.sum((pred != pos) & (true == pos)))
    tn = int(np.sum((pred != pos) & (true != pos)))
    fp = int(np.sum((pred == pos) & (true != pos)))
    return ClassificationMetrics(tp, fn, tn, fp)
