"""Calibrated decisions: conformal p-values, abstention, payload acceptance.

Detection scores are turned into two rank-based p-values, one per hypothesis
(H0: not watermarked, H1: watermarked), against held-out calibration scores.
Each p-value is valid without any distributional assumption as long as the
test score is exchangeable with the calibration scores of its hypothesis.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import CorruptFile, EmptyCalibration, EmptyRegistry, InvalidPValue

CALIBRATION_FORMAT = "provmark-calibration"
CALIBRATION_VERSION = 1


class Hypothesis(Enum):
    H0 = 0
    H1 = 1


class Verdict(str, Enum):
    WATERMARKED = "watermarked"
    NOT_WATERMARKED = "not_watermarked"
    ABSTAIN = "abstain"


def _sorted_array(values) -> np.ndarray:
    a = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if not np.all(np.isfinite(a)):
        raise ValueError("calibration scores must be finite")
    a.setflags(write=False)
    return a


def conformal_p(score: float, calib, hypothesis: Hypothesis | int = Hypothesis.H0) -> float:
    """Conformal p-value of ``score`` against calibration scores (any order).

    ``rho_k = (1 + #{i : s_k * score >= s_k * calib_i}) / (n + 1)`` with
    ``s_k = 2k - 1``.  For H0 (k=0) a calibration score counts when it is at
    least ``score``; for H1 (k=1) when it is at most ``score``.  Ties count.
    """
    calib = np.asarray(calib, dtype=np.float64)
    n = calib.size
    if n == 0:
        raise EmptyCalibration("calibration set is empty")
    if Hypothesis(hypothesis).value == 0:
        count = int(np.count_nonzero(calib >= score))
    else:
        count = int(np.count_nonzero(calib <= score))
    return (1 + count) / (n + 1)


def conformal_p_many(scores, calib, hypothesis: Hypothesis | int = Hypothesis.H0) -> np.ndarray:
    """Vectorised :func:`conformal_p` over an array of test scores."""
    calib = np.asarray(calib, dtype=np.float64)
    if calib.size == 0:
        raise EmptyCalibration("calibration set is empty")
    if np.any(calib[1:] < calib[:-1]):
        calib = np.sort(calib)
    scores = np.asarray(scores, dtype=np.float64)
    if Hypothesis(hypothesis).value == 0:
        count = calib.size - np.searchsorted(calib, scores, side="left")
    else:
        count = np.searchsorted(calib, scores, side="right")
    return (1.0 + count) / (calib.size + 1)


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Immutable snapshot of calibration scores.

    ``per_bit`` holds signed bit logits (logit times true bit) from
    watermarked calibration images, either pooled ``(m,)`` or per bit
    ``(C, m)``; every row is kept sorted.
    """

    scores0: np.ndarray
    scores1: np.ndarray
    per_bit: np.ndarray | None = None
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "scores0", _sorted_array(self.scores0))
        object.__setattr__(self, "scores1", _sorted_array(self.scores1))
        if self.scores0.size == 0 or self.scores1.size == 0:
            raise EmptyCalibration("both score sets need at least one score")
        if self.per_bit is not None:
            pb = np.sort(np.asarray(self.per_bit, dtype=np.float64), axis=-1)
            if pb.ndim not in (1, 2) or pb.shape[-1] == 0:
                raise EmptyCalibration("per-bit calibration must be non-empty 1-D or 2-D")
            pb.setflags(write=False)
            object.__setattr__(self, "per_bit", pb)
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def resolution(self) -> float:
        """Smallest attainable p-value over both hypotheses."""
        return 1.0 / (min(self.scores0.size, self.scores1.size) + 1)

    def bit_calibration(self, i: int) -> np.ndarray:
        if self.per_bit is None:
            raise EmptyCalibration("no per-bit calibration scores")
        return self.per_bit if self.per_bit.ndim == 1 else self.per_bit[i]

    def _body(self) -> dict:
        return {
            "format": CALIBRATION_FORMAT,
            "version": CALIBRATION_VERSION,
            "scores0": self.scores0.tolist(),
            "scores1": self.scores1.tolist(),
            "per_bit": None if self.per_bit is None else self.per_bit.tolist(),
            "provenance": self.provenance,
        }

    @property
    def content_hash(self) -> str:
        blob = json.dumps(self._body(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> str:
        body = self._body()
        body["sha256"] = self.content_hash
        return json.dumps(body, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CalibrationSet":
        try:
            body = json.loads(text)
            if body.get("format") != CALIBRATION_FORMAT:
                raise CorruptFile("not a calibration file")
            calib = cls(body["scores0"], body["scores1"], body.get("per_bit"),
                        body.get("provenance") or {})
        except CorruptFile:
            raise
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise CorruptFile(f"malformed calibration file: {e}") from e
        if body.get("sha256") != calib.content_hash:
            raise CorruptFile("calibration content hash mismatch")
        return calib

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "CalibrationSet":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    rho0: float
    rho1: float
    alpha: float


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def verdict_for(rho0: float, rho1: float, alpha: float) -> Verdict:
    reject0, reject1 = rho0 <= alpha, rho1 <= alpha
    if reject0 and not reject1:
        return Verdict.WATERMARKED
    if reject1 and not reject0:
        return Verdict.NOT_WATERMARKED
    # conflicting evidence or no evidence
    return Verdict.ABSTAIN


def decide(score: float, calib: CalibrationSet, alpha: float = 0.01) -> Decision:
    """Three-way verdict controlling FPR and TPR at level ``alpha``."""
    alpha = _check_alpha(alpha)
    rho0 = conformal_p(score, calib.scores0, Hypothesis.H0)
    rho1 = conformal_p(score, calib.scores1, Hypothesis.H1)
    return Decision(verdict_for(rho0, rho1, alpha), rho0, rho1, alpha)


# multiple testing

METHODS = ("holm", "hochberg", "simes")


@dataclass(frozen=True)
class PayloadTest:
    """Outcome of a multiple test over per-bit nulls.

    ``rejected`` flags individual nulls (Holm, Hochberg); Simes is a global
    test only and leaves it ``None``.
    """

    reject_global: bool
    rejected: np.ndarray | None
    method: str
    alpha: float

    @property
    def accept(self) -> bool:
        return not self.reject_global


def _check_pvalues(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise InvalidPValue("no p-values given")
    if not np.all((p >= 0.0) & (p <= 1.0)):  # also rejects NaN
        raise InvalidPValue("p-values must lie in [0, 1]")
    return p


def holm(p, alpha: float) -> np.ndarray:
    """Step-down Holm: individual rejections at FWER ``alpha``."""
    p = _check_pvalues(p)
    m = p.size
    order = np.argsort(p, kind="stable")
    rejected = np.zeros(m, dtype=bool)
    for i, j in enumerate(order):
        if p[j] > alpha / (m - i):
            break
        rejected[j] = True
    return rejected


def hochberg(p, alpha: float) -> np.ndarray:
    """Step-up Hochberg: reject the ``k`` smallest for the largest valid ``k``."""
    p = _check_pvalues(p)
    m = p.size
    order = np.argsort(p, kind="stable")
    rejected = np.zeros(m, dtype=bool)
    for i in range(m - 1, -1, -1):
        if p[order[i]] <= alpha / (m - i):
            rejected[order[: i + 1]] = True
            break
    return rejected


def simes(p, alpha: float) -> bool:
    """Simes global test: reject if some ``p_(i) <= i * alpha / m``."""
    p = np.sort(_check_pvalues(p))
    m = p.size
    return bool(np.any(p <= np.arange(1, m + 1) * alpha / m))


def test_payload(bit_pvalues, alpha: float = 0.01, method: str = "holm") -> PayloadTest:
    """Test the global null that every per-bit null holds."""
    alpha = _check_alpha(alpha)
    if method == "holm":
        r = holm(bit_pvalues, alpha)
        return PayloadTest(bool(r.any()), r, method, alpha)
    if method == "hochberg":
        r = hochberg(bit_pvalues, alpha)
        return PayloadTest(bool(r.any()), r, method, alpha)
    if method == "simes":
        return PayloadTest(simes(bit_pvalues, alpha), None, method, alpha)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


test_payload.__test__ = False  # not a pytest test despite the name


def bit_pvalues(bit_logits, code, calib: CalibrationSet) -> np.ndarray:
    """Per-bit p-values for "bit i equals ``code[i]``".

    The logit signed by the hypothesised bit is ranked against signed logits
    of correct bits from calibration; small values mean the bit disagrees.
    """
    logits = np.asarray(bit_logits, dtype=np.float64)
    bits = np.asarray(getattr(code, "bits", code), dtype=np.float64)
    if logits.shape != bits.shape:
        raise ValueError(f"{logits.size} logits for a {bits.size}-bit code")
    signed = logits * bits
    if calib.per_bit is None:
        raise EmptyCalibration("no per-bit calibration scores")
    if calib.per_bit.ndim == 1:
        return conformal_p_many(signed, calib.per_bit, Hypothesis.H1)
    if calib.per_bit.shape[0] != signed.size:
        raise ValueError("per-bit calibration does not match the code length")
    return np.array([conformal_p(s, calib.per_bit[i], Hypothesis.H1)
                     for i, s in enumerate(signed)])


@dataclass(frozen=True)
class Match:
    """Registry match: ``status`` is ``matched``, ``abstain`` or ``none``."""

    status: str
    accepted: tuple = ()
    entry: object = None

    @property
    def accepted_count(self) -> int:
        return len(self.accepted)


def match_payloads(bit_logits, registry, calib: CalibrationSet, alpha: float = 0.01,
                   method: str = "holm") -> Match:
    """Accept every registered code whose per-bit nulls survive the test.

    ``registry`` is a mapping id -> code or an iterable of ``(id, code)``
    pairs.  One accepted code is a match; several means abstention, and the
    count doubles as a tamper signal.
    """
    items: Iterable = registry.items() if hasattr(registry, "items") else registry
    items = list(items)
    if not items:
        raise EmptyRegistry("registry has no entries")
    accepted = tuple(
        entry for entry, code in items
        if test_payload(bit_pvalues(bit_logits, code, calib), alpha, method).accept)
    if len(accepted) == 1:
        return Match("matched", accepted, accepted[0])
    if accepted:
        return Match("abstain", accepted)
    return Match("none")


def empirical_rate_bound(alpha: float, n: int) -> float:
    """``alpha + 3 * sqrt(alpha (1 - alpha) / n)``: tolerance on a rate of ``n`` draws."""
    return alpha + 3.0 * math.sqrt(alpha * (1.0 - alpha) / n)
