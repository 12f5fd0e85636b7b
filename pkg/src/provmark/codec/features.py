"""Per-block DCT features used identically by the encoder and the decoder."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.fft import dct

from ..imaging import BLOCK

N_COEF = BLOCK * BLOCK


@lru_cache(maxsize=16)
def band_projection(band: tuple[tuple[int, int], ...]) -> np.ndarray:
    """(64, len(band)) matrix: flattened block -> selected DCT coefficients."""
    d = dct(np.eye(BLOCK), norm="ortho", axis=0)  # row u is the u-th basis vector
    cols = [np.outer(d[u], d[v]).ravel() for u, v in band]
    return np.stack(cols, axis=1)


def flat_blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) plane with H, W multiples of 8 -> (n_blocks, 64), raster order."""
    h, w = plane.shape
    return (plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
            .swapaxes(1, 2).reshape(-1, N_COEF))


def unflat_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return (blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK)
            .swapaxes(1, 2).reshape(h, w))


def block_features(blocks: np.ndarray, proj: np.ndarray):
    """Band coefficients plus AC energies of flattened blocks.

    Returns ``(band, ac_energy, oob_rms)``: band coefficients ``(n, k)``,
    mean squared AC coefficient over all 63 AC terms, and the RMS of the AC
    coefficients *outside* the band.  Parseval gives both energies without a
    full DCT.
    """
    band = blocks @ proj.astype(blocks.dtype, copy=False)
    total = np.einsum("ij,ij->i", blocks, blocks)
    dc2 = blocks.sum(axis=1) ** 2 / N_COEF
    ac = np.maximum(total - dc2, 0.0)
    band_e = np.einsum("ij,ij->i", band, band)
    n_oob = N_COEF - 1 - proj.shape[1]
    oob = np.maximum(ac - band_e, 0.0)
    return band, ac / (N_COEF - 1), np.sqrt(oob / n_oob)


def masking_strength(ac_energy: np.ndarray, config) -> np.ndarray:
    """Per-block embedding strength before the global backstops."""
    e = ac_energy + config.energy_floor
    if config.masking_knee > 0:
        e = e * config.masking_knee / (e + config.masking_knee)
    return config.base_strength * e ** config.masking_exponent


def decoder_weights(oob_rms: np.ndarray, config) -> np.ndarray:
    """Per-block correlation weights, decreasing with local activity."""
    return (oob_rms + config.weight_floor) ** config.weight_exponent


def window_mask(blocks_per_side: int) -> np.ndarray:
    """Central block window used by the decoder's alignment search."""
    lo, hi = blocks_per_side // 4, 3 * blocks_per_side // 4
    m = np.zeros((blocks_per_side, blocks_per_side), dtype=bool)
    m[lo:hi, lo:hi] = True
    return m
