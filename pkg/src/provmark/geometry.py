"""Geometric conventions shared by the transform catalogue and the decoder.

Coordinates are ``(x, y)`` = (column, row) with pixel centres on integers.
Rotations are counter-clockwise as seen on screen and performed about the
image centre ``((w - 1) / 2, (h - 1) / 2)``.  Keeping these formulas in one
place guarantees the decoder's search inverts exactly what the transforms do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIHEDRAL = ("identity", "flip_lr", "flip_ud", "rot90", "rot180", "rot270")


def rotation_matrix(theta_deg: float) -> np.ndarray:
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, s], [-s, c]])


def rotation_canvas(w: int, h: int, theta_deg: float) -> tuple[int, int]:
    t = math.radians(theta_deg)
    c, s = abs(math.cos(t)), abs(math.sin(t))
    return max(1, int(round(w * c + h * s))), max(1, int(round(w * s + h * c)))


def crop_box(w: int, h: int, area: float) -> tuple[int, int, int, int]:
    """Centred crop keeping ``area`` of the pixels: ``(x0, y0, cw, ch)``."""
    side = math.sqrt(area)
    cw, ch = max(1, int(round(w * side))), max(1, int(round(h * side)))
    return (w - cw) // 2, (h - ch) // 2, cw, ch


def zoom_canvas(w: int, h: int, factor: float) -> tuple[int, int, int, int]:
    """Padded canvas for a zoom-out: ``(cw, ch, x_offset, y_offset)``."""
    cw, ch = int(round(w * factor)), int(round(h * factor))
    return cw, ch, (cw - w) // 2, (ch - h) // 2


def rotate_forward(w: int, h: int, theta_deg: float):
    """Affine ``(A, b)`` taking input coords to the expanded output canvas."""
    W, H = rotation_canvas(w, h, theta_deg)
    A = rotation_matrix(theta_deg)
    c_in = np.array([(w - 1) / 2, (h - 1) / 2])
    c_out = np.array([(W - 1) / 2, (H - 1) / 2])
    return A, c_out - A @ c_in, (W, H)


def _resize_map(n_in_w, n_in_h, n_out_w, n_out_h):
    """Affine of a pixel-centre aligned resize from (n_in) to (n_out)."""
    s = np.array([n_out_w / n_in_w, n_out_h / n_in_h])
    return np.diag(s), 0.5 * s - 0.5


@dataclass(frozen=True, order=True)
class Hypothesis:
    """One candidate geometric distortion the decoder tries to undo.

    ``kind`` is a dihedral name or one of ``rotate`` (degrees, expanded
    canvas), ``crop`` (retained area) and ``zoom`` (pad factor).
    """

    kind: str
    param: float = 0.0

    @property
    def label(self) -> str:
        if self.kind in DIHEDRAL:
            return self.kind
        return f"{self.kind}:{self.param:g}"

    @property
    def is_dihedral(self) -> bool:
        return self.kind in DIHEDRAL

    @classmethod
    def parse(cls, label: str) -> "Hypothesis":
        if ":" in label:
            kind, p = label.split(":", 1)
            return cls(kind, float(p))
        return cls(label)

    def forward(self, n: int):
        """``(A, b)`` mapping original working-frame coords to observed coords."""
        if self.is_dihedral:
            raise ValueError("dihedral hypotheses are applied exactly, not by warping")
        if self.kind == "rotate":
            A, b, (W, H) = rotate_forward(n, n, self.param)
            S, t = _resize_map(W, H, n, n)
            return S @ A, S @ b + t
        if self.kind == "crop":
            x0, y0, cw, ch = crop_box(n, n, self.param)
            S, t = _resize_map(cw, ch, n, n)
            return S, t - S @ np.array([x0, y0])
        if self.kind == "zoom":
            cw, ch, ox, oy = zoom_canvas(n, n, self.param)
            S, t = _resize_map(cw, ch, n, n)
            return S, t + S @ np.array([ox, oy])
        raise ValueError(f"unknown hypothesis kind {self.kind!r}")


IDENTITY = Hypothesis("identity")


def undo_dihedral(arr: np.ndarray, kind: str) -> np.ndarray:
    """Map an observed array back to the original frame, exactly."""
    if kind == "identity":
        return arr
    if kind == "flip_lr":
        return arr[:, ::-1]
    if kind == "flip_ud":
        return arr[::-1]
    k = {"rot90": 1, "rot180": 2, "rot270": 3}[kind]
    return np.rot90(arr, -k)


def _grid(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 6) for i in range(n + 1))


CROP_GRID = _grid(0.6, 0.95, 0.025)
ZOOM_GRID = _grid(1.1, 1.5, 0.025)


def search_set(rotation_step: float = 1.0, max_rotation: float = 30.0,
               crops=CROP_GRID, zooms=ZOOM_GRID) -> list[Hypothesis]:
    """Hypotheses tried by the decoder, identity first."""
    hyps = [Hypothesis(k) for k in DIHEDRAL]
    n_steps = int(round(max_rotation / rotation_step))
    for i in range(1, n_steps + 1):
        a = round(i * rotation_step, 6)
        hyps += [Hypothesis("rotate", a), Hypothesis("rotate", -a)]
    hyps += [Hypothesis("crop", r) for r in crops]
    hyps += [Hypothesis("zoom", z) for z in zooms]
    return hyps


def neighbours(h: Hypothesis, step: float) -> list[Hypothesis]:
    """Hypotheses ``step`` away from ``h`` along its own parameter."""
    if h.kind == "identity":
        return [Hypothesis("rotate", -step), Hypothesis("rotate", step)]
    if h.kind == "rotate":
        return [Hypothesis("rotate", round(h.param + s, 6)) for s in (-step, step)]
    if h.kind == "crop":
        return [Hypothesis("crop", round(h.param + s, 6)) for s in (-step, step)
                if 0.2 < h.param + s < 1.0]
    if h.kind == "zoom":
        return [Hypothesis("zoom", round(h.param + s, 6)) for s in (-step, step)
                if 1.0 < h.param + s < 3.0]
    return []
