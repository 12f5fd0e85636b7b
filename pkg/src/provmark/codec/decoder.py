"""Blind decoder with geometric re-synchronisation.

Decoding runs in two stages over disjoint parts of the working frame:

* selection: every search hypothesis is undone on the central window only
  and scored by the detection-carrier correlation there; the best grid
  hypothesis is then refined by local hill climbing;
* scoring: the winning hypothesis is undone on the whole frame.  The
  detection logit is the Fisher-z correlation over blocks *outside* the
  window, so it is not inflated by the search and stays standard normal on
  unmarked content.  Bit logits use every visible block.
"""
from __future__ import annotations

import math

import cv2
import numpy as np

from ..errors import ImageTooSmall
from ..geometry import Hypothesis, neighbours, search_set, undo_dihedral
from ..imaging import BLOCK, ResizeMethod, RgbImage, resize_array, to_luma
from .carriers import derive_carriers
from .config import CodecConfig
from .features import band_projection, block_features, decoder_weights, flat_blocks, window_mask
from .keys import SecretKey
from .types import DecodeResult

MIN_SIZE = 64
# hill-climbing step per hypothesis kind (half the grid step), halved each round
REFINE_STEP = {"rotate": 0.5, "crop": 0.0125, "zoom": 0.0125, "identity": 0.5}
REFINE_ROUNDS = 4
# warped hypotheses must beat the exact (dihedral) ones by this many z units;
# keeps weak but unwarped marks from losing to the max over ~100 noise scores
WARP_PRIOR = 1.5
# smaller margin for stepping off an exact hypothesis during local refinement
LOCAL_PRIOR = 0.75


def fisher_z(r: np.ndarray | float, n: int) -> np.ndarray:
    r = np.clip(r, -0.999999, 0.999999)
    return np.arctanh(r) * math.sqrt(max(n - 3, 1))


class _Context:
    """Per-(key, config) precomputation shared across decodes."""

    def __init__(self, key: SecretKey, config: CodecConfig):
        n = config.working_resolution
        self.n = n
        self.config = config
        self.proj = band_projection(config.band).astype(np.float32)
        nbs = config.blocks_per_side
        k = len(config.band)
        self.k = k
        carriers = derive_carriers(key, config).reshape(-1, nbs, nbs, k)
        self.carriers = carriers.astype(np.float32)
        lo, hi = nbs // 4, 3 * nbs // 4
        self.win_blocks = (lo, hi)
        self.win_px = lo * BLOCK
        self.win_size = (hi - lo) * BLOCK
        self.win_det = self.carriers[0, lo:hi, lo:hi].reshape(-1)
        self.outside = ~window_mask(nbs)
        ys, xs = np.mgrid[0:nbs, 0:nbs] * BLOCK
        corners = [(xs - 0.5, ys - 0.5), (xs + BLOCK - 0.5, ys - 0.5),
                   (xs - 0.5, ys + BLOCK - 0.5), (xs + BLOCK - 0.5, ys + BLOCK - 0.5)]
        self.corners = np.stack([np.stack(c, axis=-1) for c in corners])  # (4, nbs, nbs, 2)

    def weighted_band(self, plane: np.ndarray) -> np.ndarray:
        """Weighted band coefficients ``(blocks_y, blocks_x, k)`` of a plane."""
        blocks = flat_blocks(plane)
        band, _, oob = block_features(blocks, self.proj)
        w = decoder_weights(oob, self.config).astype(np.float32)
        h, wd = plane.shape
        return (band * w[:, None]).reshape(h // BLOCK, wd // BLOCK, self.k)

    def valid_blocks(self, h: Hypothesis) -> np.ndarray:
        if h.is_dihedral:
            return np.ones_like(self.outside)
        A, b = h.forward(self.n)
        p = self.corners @ A.T + b
        lim = (-0.5 - 1e-6, self.n - 0.5 + 1e-6)
        inside = (p >= lim[0]) & (p <= lim[1])
        return np.all(inside, axis=(0, 3))


def _correlation(y: np.ndarray, u: np.ndarray) -> tuple[float, int]:
    n = y.size
    norm = float(np.sqrt(np.dot(y, y) * n))
    if norm == 0.0:
        return 0.0, n
    return float(np.dot(y, u)) / norm, n


def _warp(luma: np.ndarray, h: Hypothesis, n: int, origin: int = 0, size: int | None = None,
          interp: int = cv2.INTER_CUBIC):
    """Undo ``h`` on ``luma``; output the square ``[origin, origin+size)`` region."""
    size = n if size is None else size
    if h.is_dihedral:
        out = undo_dihedral(luma, h.kind)
        return np.ascontiguousarray(out[origin:origin + size, origin:origin + size])
    A, b = h.forward(n)
    o = np.array([origin, origin], dtype=np.float64)
    M = np.hstack([A, (A @ o + b)[:, None]]).astype(np.float64)
    return cv2.warpAffine(luma, M, (size, size), flags=interp | cv2.WARP_INVERSE_MAP,
                          borderMode=cv2.BORDER_REPLICATE)


class Decoder:
    """Reusable decoder bound to one key and codec configuration."""

    def __init__(self, key: SecretKey, config: CodecConfig | None = None,
                 hypotheses: list[Hypothesis] | None = None, refine: bool = True):
        self.config = config or CodecConfig()
        self.ctx = _Context(key, self.config)
        self.hypotheses = hypotheses if hypotheses is not None else search_set()
        self.refine = refine
        self.search_interp = cv2.INTER_LINEAR

    def working_luma(self, img: RgbImage) -> np.ndarray:
        if img.width < MIN_SIZE or img.height < MIN_SIZE:
            raise ImageTooSmall(f"image is {img.width}x{img.height}, need >= {MIN_SIZE}")
        n = self.config.working_resolution
        luma = to_luma(img).samples
        if luma.shape != (n, n):
            luma = resize_array(luma, n, n, ResizeMethod.BICUBIC)
        return luma.astype(np.float32)

    def _window_score(self, luma: np.ndarray, h: Hypothesis) -> float:
        c = self.ctx
        win = _warp(luma, h, c.n, c.win_px, c.win_size, self.search_interp)
        y = c.weighted_band(win).reshape(-1)
        r, m = _correlation(y, c.win_det)
        return float(fisher_z(r, m))

    def select(self, luma: np.ndarray) -> tuple[Hypothesis, float, dict]:
        scores = {h: self._window_score(luma, h) for h in self.hypotheses}

        def merit(h):
            return scores[h] - (0.0 if h.is_dihedral else WARP_PRIOR)

        best = max(scores, key=lambda h: (merit(h), -self.hypotheses.index(h)))
        if self.refine and best.kind in REFINE_STEP:
            step = REFINE_STEP[best.kind]
            for _ in range(REFINE_ROUNDS):
                for cand in neighbours(best, step):
                    if cand not in scores:
                        scores[cand] = self._window_score(luma, cand)
                    margin = LOCAL_PRIOR if best.is_dihedral else 0.0
                    if scores[cand] > scores[best] + margin:
                        best = cand
                step /= 2
        return best, scores[best], scores

    def decode_luma(self, luma: np.ndarray) -> DecodeResult:
        c = self.ctx
        best, sel, scores = self.select(luma)
        aligned = _warp(luma, best, c.n)
        y = c.weighted_band(aligned)                      # (nbs, nbs, k)
        valid = c.valid_blocks(best)
        periph = valid & c.outside
        yp = y[periph].reshape(-1)
        r0, m0 = _correlation(yp, c.carriers[0][periph].reshape(-1))
        det = float(fisher_z(r0, m0))
        yv = y[valid].reshape(-1)
        uv = c.carriers[1:, valid].reshape(c.carriers.shape[0] - 1, -1)
        m = yv.size
        norm = float(np.sqrt(np.dot(yv, yv) * m)) or 1.0
        bits = fisher_z((uv @ yv) / norm, m)
        return DecodeResult(det, bits.astype(np.float64), best, sel,
                            {h.label: s for h, s in scores.items()})

    def decode(self, img: RgbImage) -> DecodeResult:
        return self.decode_luma(self.working_luma(img))


_DECODERS: dict = {}


def decode_logits(img: RgbImage, key: SecretKey, config: CodecConfig | None = None) -> DecodeResult:
    """Detection logit, payload logits and the selected alignment for ``img``."""
    config = config or CodecConfig()
    dec = _DECODERS.get((key, config))
    if dec is None:
        if len(_DECODERS) > 8:
            _DECODERS.clear()
        dec = _DECODERS[(key, config)] = Decoder(key, config)
    return dec.decode(img)
