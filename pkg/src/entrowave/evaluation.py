"""ROC analysis, confusion-matrix rates, likelihood-ratio tests and danger maps."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

_EPS = sys.float_info.epsilon
_TINY = sys.float_info.min / _EPS


# -- chi-square tail ---------------------------------------------------------

def _gamma_p_series(a: float, x: float, tol: float, max_iter: int) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol:
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cf(a: float, x: float, tol: float, max_iter: int) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float, tol: float = 1e-15, max_iter: int = 10_000) -> float:
    """Upper regularized incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, x, tol, max_iter))
    return _gamma_q_cf(a, x, tol, max_iter)


def chi2_sf(stat: float, df: int) -> float:
    """Upper-tail probability of a chi-square variable with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if stat <= 0:
        return 1.0
    return regularized_gamma_q(df / 2.0, stat / 2.0)


def likelihood_ratio_test(ll_full: float, ll_null: float, df: int) -> tuple[float, float]:
    """``(2 * (ll_full - ll_null), chi-square upper-tail p-value)``."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if ll_full < ll_null - 1e-9:
        raise ValueError("non-nested or unconverged fits")
    stat = max(0.0, 2.0 * (ll_full - ll_null))
    return stat, chi2_sf(stat, df)


def bonferroni(p_values: Sequence[float], m: int | None = None) -> list[float]:
    """Bonferroni-adjusted p-values ``min(1, m * p)``; ``m`` defaults to the count."""
    p_values = [float(p) for p in p_values]
    if m is None:
        m = len(p_values)
    if m < 1:
        raise ValueError("m must be >= 1")
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p} outside [0, 1]")
    return [min(1.0, m * p) for p in p_values]


# -- ROC ---------------------------------------------------------------------

def _check_scores(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(int)
    if y.min(initial=1) == y.max(initial=0) or s.size == 0:
        raise ValueError("both classes must be present")
    return s, y


@dataclass(frozen=True)
class RocReport:
    """ROC points ``(fpr, tpr, threshold)`` from the strictest threshold down."""

    points: list
    auc: float
    counts: tuple

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def hit_rate_at(self, max_fpr: float) -> tuple[float, float]:
        """Best ``(hit rate, fpr)`` among points with fpr <= ``max_fpr``."""
        best = max((p for p in self.points if p[0] <= max_fpr), key=lambda p: (p[1], -p[0]))
        return best[1], best[0]

    def to_csv(self, fh) -> None:
        fh.write("threshold,false_positive_rate,true_positive_rate\n")
        for fpr, tpr, thr in self.points:
            fh.write(f"{thr!r},{fpr!r},{tpr!r}\n")


def roc_curve(scores, labels) -> RocReport:
    """Sweep thresholds over the distinct scores (ties grouped).

    A sample is called positive when its score is >= the threshold.  The
    curve starts at ``(0, 0, +inf)`` and ends at ``(1, 1, -inf)``; the
    trapezoidal AUC equals the probability that a random positive
    outscores a random negative, ties counting one half.
    """
    s, y = _check_scores(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    last_of_group = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s_sorted.size - 1]

    points = [(0.0, 0.0, math.inf)]
    for i in last_of_group:
        points.append((fp[i] / n_neg, tp[i] / n_pos, float(s_sorted[i])))
    points.append((1.0, 1.0, -math.inf))
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocReport(points=[(float(a), float(b), t) for a, b, t in points], auc=auc, counts=(n_pos, n_neg))


def auc_score(scores, labels) -> float:
    return roc_curve(scores, labels).auc


class ThresholdMetrics(NamedTuple):
    accuracy: float
    hit_rate: float
    false_positive_rate: float
    correct_rejection_rate: float

    @property
    def balanced_accuracy(self) -> float:
        return 0.5 * (self.hit_rate + self.correct_rejection_rate)


def metrics_at_threshold(scores, labels, threshold: float) -> ThresholdMetrics:
    """Confusion-matrix rates when ``score >= threshold`` means malware."""
    s, y = _check_scores(scores, labels)
    pred = s >= threshold
    pos = y == 1
    hit = float(np.mean(pred[pos]))
    fpr = float(np.mean(pred[~pos]))
    acc = float(np.mean(pred == pos))
    return ThresholdMetrics(acc, hit, fpr, 1.0 - fpr)


# -- danger map --------------------------------------------------------------

@dataclass
class DangerMap:
    """Per-size-group betas over resolution levels with LR-test annotations.

    ``rows[J]`` are the betas on z-scored energies (raw betas for models
    fitted without normalization); ``raw_rows[J]`` the same model expressed
    on raw energies.  ``annotations[J]`` holds ``chi2``, ``df``, ``p_value``
    and ``p_adjusted``.
    """

    rows: dict = field(default_factory=dict)
    raw_rows: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def j_max(self) -> int:
        return max(self.rows, default=0)

    def coarse_fine_means(self) -> tuple[float, float]:
        """Mean beta of the coarsest level and of the finest level across rows."""
        if not self.rows:
            raise ValueError("empty danger map")
        coarse = np.mean([r[0] for r in self.rows.values()])
        fine = np.mean([r[-1] for r in self.rows.values()])
        return float(coarse), float(fine)

    def to_csv(self, fh, raw: bool = False) -> None:
        rows = self.raw_rows if raw else self.rows
        width = self.j_max
        header = ["J"] + [f"level_{j}" for j in range(1, width + 1)]
        header += ["chi2", "df", "p_value", "p_bonferroni"]
        fh.write(",".join(header) + "\n")
        for J in sorted(rows):
            cells = [str(J)] + [repr(float(b)) for b in rows[J]] + [""] * (width - J)
            ann = self.annotations.get(J)
            if ann is None:
                cells += ["", "", "", ""]
            else:
                cells += [repr(ann["chi2"]), str(ann["df"]), repr(ann["p_value"]), repr(ann["p_adjusted"])]
            fh.write(",".join(cells) + "\n")

    def to_svg(self, fh, cell: int = 24) -> None:
        """Heatmap with a blue-white-red scale centred at zero, largest J on top."""
        width = self.j_max
        scale = max((float(np.max(np.abs(r))) for r in self.rows.values()), default=0.0) or 1.0
        js = sorted(self.rows, reverse=True)
        margin = 40
        w = margin + cell * width + 10
        h = margin + cell * len(js) + 10
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
                 f'font-family="sans-serif" font-size="10">\n')
        for r, J in enumerate(js):
            y = 10 + r * cell
            fh.write(f'<text x="4" y="{y + cell // 2 + 4}">J={J}</text>\n')
            for j, beta in enumerate(self.rows[J]):
                fh.write(f'<rect x="{margin + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{_diverging(float(beta) / scale)}"><title>J={J} level={j + 1} '
                         f'beta={float(beta):.4g}</title></rect>\n')
        for j in range(width):
            fh.write(f'<text x="{margin + j * cell + cell // 3}" y="{h - 2}">{j + 1}</text>\n')
        fh.write("</svg>\n")


def _diverging(t: float) -> str:
    t = max(-1.0, min(1.0, t))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
    else:
        r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def danger_map(models: dict, group_fits: dict | None = None, min_J: int = 3, m: int | None = None) -> DangerMap:
    """Assemble the beta matrix of per-size-group models.

    ``group_fits`` optionally maps ``J`` to ``(ll_full, ll_null)``; by
    default the log-likelihoods stored on each model are used.  Groups
    between ``min_J`` and the largest trained ``J`` without a model are
    omitted and noted.  Bonferroni uses ``m`` hypotheses (default: the
    number of annotated rows).
    """
    group_fits = group_fits or {}
    dm = DangerMap()
    if not models:
        return dm
    top = max(models)
    tests = {}
    for J in range(min_J, top + 1):
        model = models.get(J)
        if model is None:
            dm.notes.append(f"no model for size group J={J}")
            continue
        dm.rows[J] = np.asarray(model.betas, dtype=float).copy()
        dm.raw_rows[J] = model.raw_coefficients()[1]
        fits = group_fits.get(J)
        if fits is None and model.loglik is not None and model.null_loglik is not None:
            fits = (model.loglik, model.null_loglik)
        if fits is None:
            dm.notes.append(f"no log-likelihoods for J={J}")
            continue
        tests[J] = likelihood_ratio_test(fits[0], fits[1], df=J)
    adjusted = bonferroni([p for _, p in tests.values()], m if m is not None else max(len(tests), 1))
    for (J, (stat, p)), p_adj in zip(tests.items(), adjusted):
        dm.annotations[J] = {"chi2": stat, "df": J, "p_value": p, "p_adjusted": p_adj}
    return dm
