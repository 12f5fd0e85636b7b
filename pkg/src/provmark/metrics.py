"""Quality proxies, payload metrics and TPR/FPR operating points.

Detection rule everywhere: an image is flagged when ``score > kappa``.  When
the FPR target can only be met by splitting a group of tied scores, the
operating point records the tied value and the largest tie-breaking fraction
``phi`` that keeps the FPR within target; TPR is then reported as a bracket
``[TPR(score > v), TPR(score > v) + phi * P(score == v)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .codec.types import PayloadCode, sign
from .errors import DimensionMismatch, EmptyScores, InsufficientNegatives, LengthMismatch
from .imaging import LUMA_WEIGHTS, RgbImage

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


# ---------------------------------------------------------------------------
# Quality


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    sa = a.samples if isinstance(a, RgbImage) else np.asarray(a, dtype=np.float64)
    sb = b.samples if isinstance(b, RgbImage) else np.asarray(b, dtype=np.float64)
    if sa.shape != sb.shape:
        raise DimensionMismatch(f"shapes differ: {sa.shape} vs {sb.shape}")
    return sa, sb


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio on [0, 1] samples; ``inf`` for identical input."""
    sa, sb = _pair(a, b)
    mse = float(np.mean((sa - sb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _luma(s: np.ndarray) -> np.ndarray:
    return s @ LUMA_WEIGHTS if s.ndim == 3 else s


def ssim(a, b) -> float:
    """Mean SSIM over luma with an 11x11 Gaussian window (sigma 1.5).

    Windows touching the border are excluded from the mean.
    """
    sa, sb = _pair(a, b)
    x, y = _luma(sa), _luma(sb)
    filt = lambda z: gaussian_filter(z, SSIM_SIGMA, truncate=SSIM_RADIUS / SSIM_SIGMA)  # noqa: E731
    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    smap = num / den
    r = SSIM_RADIUS
    if smap.shape[0] > 2 * r and smap.shape[1] > 2 * r:
        smap = smap[r:-r, r:-r]
    return float(smap.mean())


# ---------------------------------------------------------------------------
# Payload metrics


def _logits_and_code(logits, code) -> tuple[np.ndarray, np.ndarray]:
    lg = np.asarray(logits, dtype=np.float64).ravel()
    c = code.bits if isinstance(code, PayloadCode) else np.asarray(code).ravel()
    if lg.size != c.size:
        raise LengthMismatch(f"{lg.size} logits vs {c.size} code bits")
    return lg, c


def bit_count_score(logits, reference_code) -> int:
    """Number of logits whose sign matches the reference code."""
    lg, c = _logits_and_code(logits, reference_code)
    return int(np.sum(sign(lg) == c))


def bit_accuracy(logits, code) -> float:
    lg, c = _logits_and_code(logits, code)
    return bit_count_score(lg, c) / c.size


def code_accuracy(logits, code) -> int:
    lg, c = _logits_and_code(logits, code)
    return int(bit_count_score(lg, c) == c.size)


# ---------------------------------------------------------------------------
# Operating points


@dataclass(frozen=True)
class OperatingPoint:
    """Single detection threshold shared by every transform of a run.

    ``tie_value``/``tie_fraction`` describe the boundary tie group: flagging
    a fraction ``tie_fraction`` of scores equal to ``tie_value`` (uniformly at
    random) still satisfies the FPR target.
    """

    kappa: float
    target_fpr: float
    achieved_fpr: float
    tie_value: float | None = None
    tie_fraction: float = 0.0

    def flags(self, scores) -> np.ndarray:
        return np.asarray(scores, dtype=np.float64) > self.kappa

    def tpr_bracket(self, pos_scores) -> tuple[float, float]:
        pos = np.asarray(pos_scores, dtype=np.float64)
        if pos.size == 0:
            raise EmptyScores("no positive scores")
        above = int(np.sum(pos > self.kappa))
        lo = above / pos.size
        if self.tie_value is None or self.tie_fraction == 0.0:
            return lo, lo
        tied = int(np.sum(pos == self.tie_value))
        return lo, (above + self.tie_fraction * tied) / pos.size

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "target_fpr": self.target_fpr,
                "achieved_fpr": self.achieved_fpr, "tie_value": self.tie_value,
                "tie_fraction": self.tie_fraction}


def _as_groups(neg) -> list[np.ndarray]:
    if isinstance(neg, Mapping):
        groups = [np.asarray(v, dtype=np.float64).ravel() for v in neg.values()]
    elif len(neg) and np.ndim(neg[0]) > 0:
        groups = [np.asarray(v, dtype=np.float64).ravel() for v in neg]
    else:
        groups = [np.asarray(neg, dtype=np.float64).ravel()]
    groups = [g for g in groups if g.size]
    if not groups:
        raise EmptyScores("no negative scores")
    for g in groups:
        if not np.all(np.isfinite(g)):
            raise ValueError("scores must be finite")
    return groups


def _just_above(v: float) -> float:
    return float(np.nextafter(v, math.inf))


def calibrate_kappa(neg_scores, target_fpr: float) -> OperatingPoint:
    """Smallest threshold whose FPR, averaged over groups, is <= target.

    ``neg_scores`` is one score array or a mapping/sequence of arrays (one
    per worst-case transform); each group's FPR counts equally.  The
    threshold sits midway between adjacent distinct negative scores.
    """
    if not 0.0 <= target_fpr <= 1.0:
        raise ValueError("target_fpr must lie in [0, 1]")
    groups = _as_groups(neg_scores)
    total = sum(g.size for g in groups)
    if target_fpr > 0 and total < math.ceil(1.0 / target_fpr - 1e-9):
        raise InsufficientNegatives(
            f"{total} negatives cannot resolve a {target_fpr:g} FPR target")
    sorted_groups = [np.sort(g) for g in groups]
    values = np.unique(np.concatenate(groups))  # ascending distinct
    sizes = np.array([g.size for g in groups], dtype=np.float64)

    def mean_fpr_above(v: float) -> float:
        # strict: scores > v
        return float(np.mean([(g.size - np.searchsorted(g, v, side="right")) / g.size
                              for g in sorted_groups]))

    # FPR above values[i] is non-increasing in i: binary search smallest feasible.
    lo, hi = 0, values.size - 1
    if mean_fpr_above(values[-1]) > target_fpr:  # pragma: no cover - always 0
        raise RuntimeError("unreachable: zero FPR above the maximum")
    if target_fpr >= 1.0:
        return OperatingPoint(float(np.nextafter(values[0], -math.inf)), target_fpr, 1.0)
    while lo < hi:
        mid = (lo + hi) // 2
        if mean_fpr_above(values[mid]) <= target_fpr:
            hi = mid
        else:
            lo = mid + 1
    i = lo
    v = float(values[i])
    kappa = 0.5 * (v + float(values[i + 1])) if i + 1 < values.size else _just_above(v)
    if not kappa > v:
        kappa = _just_above(v)
    achieved = mean_fpr_above(v)
    tied = np.array([np.searchsorted(g, v, side="right") - np.searchsorted(g, v, side="left")
                     for g in sorted_groups], dtype=np.float64)
    tie_rate = float(np.mean(tied / sizes))
    phi = 0.0
    if tie_rate > 0 and target_fpr > achieved:
        phi = min(1.0, (target_fpr - achieved) / tie_rate)
    return OperatingPoint(kappa, target_fpr, achieved, v if phi > 0 else None, phi)


def tpr_at_fpr(pos_scores, neg_scores, target_fpr: float) -> tuple[float, float]:
    """TPR bracket at the most permissive threshold meeting ``target_fpr``.

    Single negative group; exact integer bookkeeping so the bracket matches
    a brute-force enumeration of tie-breaking rules.
    """
    pos = np.sort(np.asarray(pos_scores, dtype=np.float64).ravel())
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64).ravel())
    if pos.size == 0 or neg.size == 0:
        raise EmptyScores("tpr_at_fpr needs non-empty score sets")
    n_neg, n_pos = neg.size, pos.size
    values = np.unique(neg)
    # negatives strictly above each distinct value, and above -inf
    above_neg = n_neg - np.searchsorted(neg, values, side="right")
    if target_fpr >= 1.0:
        return 1.0, 1.0
    feasible = above_neg / n_neg <= target_fpr
    i = int(np.argmax(feasible))  # first feasible (above_neg is non-increasing)
    v = values[i]
    n_above = int(above_neg[i])
    pos_above = int(n_pos - np.searchsorted(pos, v, side="right"))
    a_neg = int(np.searchsorted(neg, v, side="right") - np.searchsorted(neg, v, side="left"))
    b_pos = int(np.searchsorted(pos, v, side="right") - np.searchsorted(pos, v, side="left"))
    k = 0
    while k < a_neg and (n_above + k + 1) / n_neg <= target_fpr:
        k += 1
    lo = pos_above / n_pos
    hi = (pos_above * a_neg + k * b_pos) / (n_pos * a_neg)
    return lo, hi


def mean_fpr(neg_groups, op: OperatingPoint) -> float:
    groups = _as_groups(neg_groups)
    return float(np.mean([np.mean(g > op.kappa) for g in groups]))


def clopper_pearson(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    from scipy.stats import beta

    a = (1.0 - level) / 2
    lo = 0.0 if successes == 0 else float(beta.ppf(a, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(beta.ppf(1 - a, successes + 1, n - successes))
    return lo, hi
