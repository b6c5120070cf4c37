"""L1-penalised logistic regression on sparse binary features.

Minimises::

    sum_i [log(1 + exp(eta_i)) - y_i * eta_i] + lam * sum_j |beta_j|

with ``eta = intercept + X @ beta`` and an unpenalised intercept.  The
penalty is applied to the summed (not averaged) loss, so ``lam`` does not
scale with the number of samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .features import FeatureDictionary, FeatureVector, to_matrix

MODEL_HEADER = "# entrowave-lasso-model v1"


@dataclass
class LassoModel:
    weights: dict
    intercept: float
    lam: float
    n_features: int
    iterations: int = 0
    objective: float = float("nan")
    converged: bool = False
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = {int(j): float(w) for j, w in self.weights.items() if w != 0.0}

    def coef(self) -> np.ndarray:
        beta = np.zeros(self.n_features)
        for j, w in self.weights.items():
            beta[j] = w
        return beta

    def dump(self, fh) -> None:
        fh.write(MODEL_HEADER + "\n")
        fh.write(f"lambda {self.lam!r}\n")
        fh.write(f"intercept {self.intercept!r}\n")
        fh.write(f"n_features {self.n_features}\n")
        fh.write(f"iterations {self.iterations}\n")
        fh.write(f"objective {self.objective!r}\n")
        fh.write(f"converged {int(self.converged)}\n")
        fh.write(f"weights {len(self.weights)}\n")
        for j in sorted(self.weights):
            fh.write(f"{j} {self.weights[j]!r}\n")

    @classmethod
    def load(cls, fh) -> "LassoModel":
        lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or lines[0] != MODEL_HEADER:
            raise ValueError("not a lasso model file")
        meta = {}
        i = 1
        while i < len(lines):
            key, _, value = lines[i].partition(" ")
            meta[key] = value
            i += 1
            if key == "weights":
                break
        n_weights = int(meta["weights"])
        body = lines[i:i + n_weights]
        if len(body) != n_weights:
            raise ValueError("truncated lasso model file")
        weights = {}
        for row in body:
            j, w = row.split()
            weights[int(j)] = float(w)
        return cls(
            weights=weights,
            intercept=float(meta["intercept"]),
            lam=float(meta["lambda"]),
            n_features=int(meta["n_features"]),
            iterations=int(meta.get("iterations", 0)),
            objective=float(meta.get("objective", "nan")),
            converged=bool(int(meta.get("converged", 0))),
        )


def _as_binary_csc(X, n_features=None):
    if isinstance(X, (list, tuple)) and (not X or isinstance(X[0], FeatureVector)):
        X, _ = to_matrix(X, n_features)
    X = sp.csc_matrix(X, dtype=float)
    X.sum_duplicates()
    X.eliminate_zeros()
    if X.nnz and not np.all(X.data == 1.0):
        raise ValueError("feature values must be binary (0/1)")
    return X


def _loss(eta, y) -> float:
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def _soft_step(b, g, h, lam):
    z = b - g / h
    return math.copysign(max(abs(z) - lam / h, 0.0), z)


def lasso_objective(X, y, intercept: float, beta, lam: float) -> float:
    X = _as_binary_csc(X)
    beta = np.asarray(beta, dtype=float)
    eta = intercept + X @ beta
    return _loss(eta, np.asarray(y, float)) + lam * float(np.abs(beta).sum())


def train_lasso(
    X,
    y=None,
    lam: float = 1.0,
    max_epochs: int = 10_000,
    tol: float = 1e-7,
    n_features: int | None = None,
) -> LassoModel:
    """Fit the logistic lasso by cyclic coordinate descent.

    ``X`` is an ``(n, P)`` binary matrix (dense, scipy sparse) or a list of
    :class:`FeatureVector` (labels taken from the vectors when ``y`` is
    None).  Coordinates are visited in ascending id after the intercept.
    Each update is a soft-thresholded Newton step on that coordinate; when
    it fails to lower the objective it is replaced by the step from the
    ``n_j / 4`` curvature bound, which always does.  Iteration stops once
    no weight moves by more than ``tol`` in an epoch.
    """
    if y is None:
        if not isinstance(X, (list, tuple)):
            raise ValueError("labels required")
        y = [v.label for v in X]
    X = _as_binary_csc(X, n_features)
    y = np.asarray(y, dtype=float).ravel()
    n, P = X.shape
    if n == 0 or y.size != n:
        raise ValueError("dataset must be non-empty with one label per row")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("degenerate labels")
    if lam < 0:
        raise ValueError("lambda must be non-negative")

    indptr, indices = X.indptr, X.indices
    columns = [j for j in range(P) if indptr[j + 1] > indptr[j]]
    beta = np.zeros(P)
    base = y.mean()
    b0 = math.log(base / (1.0 - base))
    eta = np.full(n, b0)
    obj = _loss(eta, y)
    history = [obj]
    converged = False
    epoch = 0

    for epoch in range(1, max_epochs + 1):
        max_delta = 0.0

        p = expit(eta)
        g = float(np.sum(p - y))
        h = max(float(np.sum(p * (1 - p))), 1e-12)
        delta = -g / h
        if _loss(eta + delta, y) > _loss(eta, y):
            delta = -g / (n / 4.0)
        b0 += delta
        eta += delta
        max_delta = abs(delta)

        for j in columns:
            rows = indices[indptr[j]:indptr[j + 1]]
            e = eta[rows]
            yy = y[rows]
            p = expit(e)
            g = float(np.sum(p - yy))
            bj = beta[j]
            if bj == 0.0 and abs(g) <= lam:
                continue
            h = max(float(np.sum(p * (1 - p))), 1e-12)
            new = _soft_step(bj, g, h, lam)
            old_f = _loss(e, yy) + lam * abs(bj)
            if _loss(e + (new - bj), yy) + lam * abs(new) > old_f:
                new = _soft_step(bj, g, rows.size / 4.0, lam)
            d = new - bj
            if d != 0.0:
                beta[j] = new
                eta[rows] = e + d
                max_delta = max(max_delta, abs(d))

        obj = _loss(eta, y) + lam * float(np.abs(beta).sum())
        history.append(obj)
        if max_delta < tol:
            converged = True
            break

    nz = np.flatnonzero(beta)
    return LassoModel(
        weights={int(j): float(beta[j]) for j in nz},
        intercept=float(b0),
        lam=float(lam),
        n_features=P,
        iterations=epoch,
        objective=obj,
        converged=converged,
        history=history,
    )


def kkt_residuals(model: LassoModel, X, y) -> np.ndarray:
    """Optimality violation per coordinate; entry 0 is the intercept.

    For a zero weight the violation is ``max(0, |g_j| - lam)``; for a
    nonzero weight it is ``|g_j + lam * sign(beta_j)|`` where ``g`` is the
    gradient of the negative log-likelihood.
    """
    X = _as_binary_csc(X, model.n_features)
    y = np.asarray(y, dtype=float)
    beta = model.coef()
    p = expit(model.intercept + X @ beta)
    g = np.asarray(X.T @ (p - y)).ravel()
    res = np.where(
        beta == 0.0,
        np.maximum(np.abs(g) - model.lam, 0.0),
        np.abs(g + model.lam * np.sign(beta)),
    )
    return np.concatenate([[abs(float(np.sum(p - y)))], res])


def predict(model: LassoModel, vector) -> float:
    """Malware probability for one :class:`FeatureVector` (or id list)."""
    idx = vector.indices if isinstance(vector, FeatureVector) else vector
    z = model.intercept + sum(model.weights.get(int(j), 0.0) for j in idx)
    return float(expit(z))


def predict_matrix(model: LassoModel, X) -> np.ndarray:
    X = _as_binary_csc(X, model.n_features)
    if X.shape[1] != model.n_features:
        raise ValueError("feature dimension mismatch")
    return expit(model.intercept + X @ model.coef())


def influential_features(model: LassoModel, k: int = 100) -> tuple[list, list]:
    """Ids of the ``k`` most positive and ``k`` most negative weights.

    Ties go to the smaller feature id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    items = model.weights.items()
    pos = sorted(((-w, j) for j, w in items if w > 0))[:k]
    neg = sorted(((w, j) for j, w in items if w < 0))[:k]
    return [j for _, j in pos], [j for _, j in neg]


def influence_share(model: LassoModel, dictionary: FeatureDictionary, k: int = 100) -> dict:
    """Per block: fraction of all features and of the influential set.

    Returns ``{block: {"all": f, "influential": g}}``; ``g`` is 0 for every
    block when the model has no nonzero weights.
    """
    pos, neg = influential_features(model, k)
    chosen = pos + neg
    total = dictionary.n_features
    out = {}
    for name, (a, b) in dictionary.blocks().items():
        hits = sum(a <= j < b for j in chosen)
        out[name] = {
            "all": (b - a) / total if total else 0.0,
            "influential": hits / len(chosen) if chosen else 0.0,
        }
    return out


def describe_influential(model: LassoModel, dictionary: FeatureDictionary, k: int = 100) -> list[tuple]:
    """``(feature id, weight, name)`` rows for the influential set."""
    pos, neg = influential_features(model, k)
    return [(j, model.weights[j], dictionary.feature_name(j)) for j in pos + neg]
