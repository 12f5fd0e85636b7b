"""Small utilities shared by several test modules."""
from __future__ import annotations

import cv2
import numpy as np

from provmark.errors import DistanceViolation
from provmark.geometry import Hypothesis, undo_dihedral
from provmark.imaging import LUMA_WEIGHTS, ResizeMethod, resize_array
from provmark.payload import PayloadRegistry

# transform id -> decoder hypothesis for a given strength
GEOMETRY = {
    "rotation": lambda s: Hypothesis("rotate", s),
    "small rotation": lambda s: Hypothesis("rotate", s),
    "crop resize": lambda s: Hypothesis("crop", s),
    "zoom out": lambda s: Hypothesis("zoom", s),
    "all rotations": lambda s: Hypothesis({90: "rot90", 180: "rot180", 270: "rot270"}[int(s)]),
    "flip left-right": lambda s: Hypothesis("flip_lr"),
    "flip up-down": lambda s: Hypothesis("flip_ud"),
}


def fill_registry(reg: PayloadRegistry, n: int) -> list[int]:
    """Assign sequential ids (versions cycling 0..2), skipping d_min violations."""
    ids, cid = [], 0
    while len(ids) < n:
        try:
            reg.assign_code(cid, cid % 3)
            ids.append(cid)
        except DistanceViolation:
            pass
        cid += 1
    return ids


def aligned_luma(samples: np.ndarray, n: int, hyp: Hypothesis | None) -> np.ndarray:
    """Luma of ``samples`` resized to ``n`` and mapped back through ``hyp``."""
    luma = samples @ LUMA_WEIGHTS
    if luma.shape != (n, n):
        luma = resize_array(luma, n, n, ResizeMethod.BICUBIC)
    if hyp is None:
        return luma
    if hyp.is_dihedral:
        return np.ascontiguousarray(undo_dihedral(luma, hyp.kind))
    A, b = hyp.forward(n)
    M = np.hstack([A, b[:, None]])
    return cv2.warpAffine(luma, M, (n, n), flags=cv2.INTER_CUBIC | cv2.WARP_INVERSE_MAP,
                          borderMode=cv2.BORDER_REPLICATE)


def central(a: np.ndarray, frac: float = 0.5) -> np.ndarray:
    h, w = a.shape[:2]
    y0, x0 = int(h * (1 - frac) / 2), int(w * (1 - frac) / 2)
    return a[y0:h - y0, x0:w - x0]
