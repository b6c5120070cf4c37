"""Single-feature suspiciousness score from wavelet energy spectra.

Files are grouped by size (``J = floor(log2 T)`` of their entropy stream)
and one logistic regression per group maps the ``J`` energies to a
probability of being malware.  Scores for the training corpus itself come
from k-fold cross-validation, so no file is scored by a model that saw it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .wavelet import EnergySpectrum, dyadic_level

RIDGE_EPS = 1e-8
_PROB_FLOOR = 1e-15
MODEL_FORMAT = "entrowave-ssecs-model"
MODEL_VERSION = 1


def size_group(T: int) -> int:
    """Size group of a stream with ``T`` chunks, ``floor(log2 T)``."""
    if T < 2:
        raise ValueError("stream needs at least 2 values to have a size group")
    return dyadic_level(T)


def malware_sensitivity(beta: float) -> float:
    """Percent change in the odds of malware per unit increase of a feature."""
    return math.expm1(beta) * 100.0


def logistic(z):
    """Logistic function clipped so results stay strictly inside (0, 1)."""
    p = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))
    return np.clip(p, _PROB_FLOOR, 1.0 - _PROB_FLOOR)


# -- fitting -----------------------------------------------------------------

def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("feature rows and labels differ in length")
    if y.size < 2:
        raise ValueError("need at least 2 samples")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("degenerate labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    return X, y


def log_likelihood(X, y, beta0: float, betas) -> float:
    """Bernoulli log-likelihood of a logistic model (no penalty)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    z = beta0 + X @ np.asarray(betas, dtype=float)
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def null_log_likelihood(y) -> float:
    """Log-likelihood of the intercept-only model at its MLE."""
    y = np.asarray(y, dtype=float)
    n1 = float(y.sum())
    n0 = y.size - n1
    total = 0.0
    if n1 > 0:
        total += n1 * math.log(n1 / y.size)
    if n0 > 0:
        total += n0 * math.log(n0 / y.size)
    return total


def penalized_objective(theta, X, y, ridge_eps: float = RIDGE_EPS):
    """Return ``(objective, gradient)`` for ``theta = [beta0, *betas]``.

    The objective is the log-likelihood minus ``ridge_eps * ||betas||^2``;
    the intercept is not penalised.
    """
    theta = np.asarray(theta, dtype=float)
    X1 = np.column_stack([np.ones(len(y)), X])
    z = X1 @ theta
    obj = float(np.sum(y * z - np.logaddexp(0.0, z))) - ridge_eps * float(theta[1:] @ theta[1:])
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    grad = X1.T @ (y - p)
    grad[1:] -= 2.0 * ridge_eps * theta[1:]
    return obj, grad


def fit_logistic(
    X,
    y,
    ridge_eps: float = RIDGE_EPS,
    max_iter: int = 500,
    tol: float = 1e-8,
    trace: list | None = None,
) -> tuple[float, np.ndarray]:
    """Maximum-likelihood logistic regression with a tiny ridge.

    Damped Newton: each full step is halved until the penalised
    log-likelihood stops decreasing, so the objective is monotone
    across iterations.  Stops when the gradient norm drops below ``tol``
    or after ``max_iter`` iterations.  If ``trace`` is a list, the
    objective after each iteration is appended to it.

    Returns ``(beta0, betas)``.
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    X1 = np.column_stack([np.ones(n), X])
    penalty = np.full(d + 1, 2.0 * ridge_eps)
    penalty[0] = 0.0

    theta = np.zeros(d + 1)
    base = y.mean()
    theta[0] = math.log(base / (1.0 - base))
    obj, grad = penalized_objective(theta, X, y, ridge_eps)
    if trace is not None:
        trace.append(obj)

    for _ in range(max_iter):
        if np.linalg.norm(grad) < tol:
            break
        z = X1 @ theta
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        w = p * (1.0 - p)
        H = (X1 * w[:, None]).T @ X1 + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = grad.copy()

        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            cand_obj, cand_grad = penalized_objective(cand, X, y, ridge_eps)
            if cand_obj >= obj:
                break
            t *= 0.5
        else:
            break
        improved = cand_obj > obj
        theta, obj, grad = cand, cand_obj, cand_grad
        if trace is not None:
            trace.append(obj)
        if not improved and np.linalg.norm(grad) >= tol:
            # flat direction, no further progress possible
            break

    return float(theta[0]), theta[1:].copy()


# -- models ------------------------------------------------------------------

@dataclass
class SizeGroupModel:
    """Logistic model for one size group ``J``.

    ``normalization`` is ``(means, stds)`` when features are z-scored
    before the linear predictor is formed.
    """

    J: int
    beta0: float
    betas: np.ndarray
    normalization: tuple | None = None
    loglik: float | None = None
    null_loglik: float | None = None
    n_samples: int = 0
    n_positive: int = 0

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        if self.betas.shape != (self.J,):
            raise ValueError(f"expected {self.J} betas, got {self.betas.shape}")
        if self.normalization is not None:
            means, stds = (np.asarray(a, dtype=float) for a in self.normalization)
            if means.shape != (self.J,) or stds.shape != (self.J,):
                raise ValueError("normalization must hold J means and J stds")
            if np.any(stds <= 0):
                raise ValueError("normalization stds must be positive")
            self.normalization = (means, stds)

    def transform(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if self.normalization is None:
            return x
        means, stds = self.normalization
        return (x - means) / stds

    def raw_coefficients(self) -> tuple[float, np.ndarray]:
        """Intercept and betas expressed on the raw (unscaled) energies."""
        if self.normalization is None:
            return self.beta0, self.betas.copy()
        means, stds = self.normalization
        raw = self.betas / stds
        return float(self.beta0 - raw @ means), raw

    def to_dict(self) -> dict:
        out = {
            "J": self.J,
            "beta0": self.beta0,
            "betas": self.betas.tolist(),
            "normalization": None,
            "loglik": self.loglik,
            "null_loglik": self.null_loglik,
            "n_samples": self.n_samples,
            "n_positive": self.n_positive,
        }
        if self.normalization is not None:
            out["normalization"] = {
                "means": self.normalization[0].tolist(),
                "stds": self.normalization[1].tolist(),
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SizeGroupModel":
        norm = d.get("normalization")
        if norm is not None:
            norm = (norm["means"], norm["stds"])
        return cls(
            J=int(d["J"]),
            beta0=float(d["beta0"]),
            betas=d["betas"],
            normalization=norm,
            loglik=d.get("loglik"),
            null_loglik=d.get("null_loglik"),
            n_samples=int(d.get("n_samples", 0)),
            n_positive=int(d.get("n_positive", 0)),
        )


@dataclass(frozen=True)
class LabeledSpectrum:
    spectrum: EnergySpectrum
    label: int
    file_id: Hashable

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def ssecs_score(spectrum, model: SizeGroupModel) -> float:
    """Predicted malware probability of one energy spectrum."""
    e = spectrum.energies if isinstance(spectrum, EnergySpectrum) else np.asarray(spectrum, float)
    if e.shape != (model.J,):
        raise ValueError(f"spectrum length {e.size} does not match model J={model.J}")
    return float(logistic(model.beta0 + model.transform(e) @ model.betas))


def _zscore_stats(X):
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    return means, stds


def fit_group_model(X, y, J: int, normalize: bool = True, ridge_eps: float = RIDGE_EPS) -> SizeGroupModel:
    """Fit one size-group model on an ``(n, J)`` energy matrix."""
    X, y = _check_xy(X, y)
    norm = _zscore_stats(X) if normalize else None
    Xt = (X - norm[0]) / norm[1] if norm else X
    beta0, betas = fit_logistic(Xt, y, ridge_eps=ridge_eps)
    return SizeGroupModel(
        J=J,
        beta0=beta0,
        betas=betas,
        normalization=norm,
        loglik=log_likelihood(Xt, y, beta0, betas),
        null_loglik=null_log_likelihood(y),
        n_samples=int(y.size),
        n_positive=int(y.sum()),
    )


@dataclass
class SSECSResult:
    """Output of :func:`train_ssecs`.

    ``scores`` are the out-of-fold probabilities, ``folds`` maps each file
    to ``(J, fold index)``, ``models`` holds the per-group models refit on
    all of the group's files, and ``skipped`` explains untrained groups.
    """

    models: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    folds: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def score(self, spectrum) -> float | None:
        """Score an unseen spectrum with its group's final model (None if untrained)."""
        e = spectrum.energies if isinstance(spectrum, EnergySpectrum) else np.asarray(spectrum, float)
        model = self.models.get(e.size)
        return None if model is None else ssecs_score(e, model)


def assign_folds(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle, then deal positions to folds round-robin (sizes differ by <= 1)."""
    fold = np.empty(n, dtype=int)
    fold[rng.permutation(n)] = np.arange(n) % folds
    return fold


def train_ssecs(
    corpus: Sequence[LabeledSpectrum],
    folds: int = 5,
    normalize: bool = True,
    seed: int = 0,
    ridge_eps: float = RIDGE_EPS,
) -> SSECSResult:
    """Cross-validated per-size-group training.

    Groups with fewer than ``folds`` files, a single class, or a training
    split that ends up single-class are skipped and the reason recorded.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    ids = [s.file_id for s in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("file ids must be unique")

    groups: dict[int, list[LabeledSpectrum]] = {}
    for s in corpus:
        groups.setdefault(s.spectrum.J, []).append(s)

    result = SSECSResult()
    for J in sorted(groups):
        members = groups[J]
        X = np.array([m.spectrum.energies for m in members])
        y = np.array([m.label for m in members], dtype=float)
        if len(members) < folds:
            result.skipped[J] = f"only {len(members)} files for {folds} folds"
            continue
        if y.min() == y.max():
            result.skipped[J] = "degenerate labels"
            continue
        fold = assign_folds(len(members), folds, np.random.default_rng([seed, J]))
        scores = np.empty(len(members))
        try:
            for f in range(folds):
                test = fold == f
                model = fit_group_model(X[~test], y[~test], J, normalize, ridge_eps)
                scores[test] = logistic(model.beta0 + model.transform(X[test]) @ model.betas)
        except ValueError as exc:
            result.skipped[J] = f"{exc} in fold {f}"
            continue
        result.models[J] = fit_group_model(X, y, J, normalize, ridge_eps)
        for m, s, f in zip(members, scores, fold):
            result.scores[m.file_id] = float(s)
            result.folds[m.file_id] = (J, int(f))
    return result


def baseline_features(stream) -> tuple[float, float]:
    """Mean and (population) standard deviation of an entropy stream."""
    v = np.asarray(getattr(stream, "values", stream), dtype=float)
    if v.size == 0:
        raise ValueError("empty stream")
    return float(v.mean()), float(v.std())


# -- serialisation -----------------------------------------------------------

def dump_models(models: dict, fh, chunk_size: int | None = None) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "chunk_size": chunk_size,
        "groups": [models[J].to_dict() for J in sorted(models)],
    }
    json.dump(payload, fh, indent=1, sort_keys=True)
    fh.write("\n")


def load_models(fh) -> tuple[dict, int | None]:
    """Read a model file; returns ``(models by J, chunk_size)``."""
    payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError("not an SSECS model file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported SSECS model version {payload.get('version')}")
    models = {g["J"]: SizeGroupModel.from_dict(g) for g in payload["groups"]}
    return models, payload.get("chunk_size")
