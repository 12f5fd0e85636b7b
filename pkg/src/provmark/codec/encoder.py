"""Keyed spread-spectrum embedding with informed host cancellation.

Every carrier is spread over all ``(block, band coefficient)`` slots of the
working-resolution luma plane.  The payload part of the residual is plain
additive spread spectrum, scaled per block by the block's AC energy.  On top
of it a small correction removes the host's own projection on each carrier,
as measured by the decoder's weighted correlator, so the untransformed
watermark decodes with exactly the intended sign pattern.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import CodeLengthMismatch, NotWatermarkable
from ..imaging import (
    LUMA_WEIGHTS, ImagePlane, ResizeMethod, RgbImage, resize, resize_array, to_luma,
)
from .carriers import derive_carriers
from .config import CodecConfig
from .features import (
    band_projection, block_features, decoder_weights, flat_blocks, masking_strength, unflat_blocks,
    window_mask,
)
from .keys import SecretKey
from .types import PayloadCode

MIN_STD = 0.01
MAX_MODAL_FRACTION = 0.98


def should_watermark(img: RgbImage, config: CodecConfig | None = None) -> bool:
    """Corner-case filter: reject near-constant content.

    False when the luma standard deviation is below 0.01 or more than 98% of
    pixels lie within 1/255 of the modal luma value.
    """
    luma = img.samples @ LUMA_WEIGHTS
    if float(luma.std()) < MIN_STD:
        return False
    q = np.rint(luma * 255.0).astype(np.int64)
    mode = int(np.argmax(np.bincount(q.ravel(), minlength=256)))
    near = np.abs(luma - mode / 255.0) <= 1.0 / 255.0 + 1e-12
    return float(near.mean()) <= MAX_MODAL_FRACTION


def rescale_residual(residual: np.ndarray, native_w: int, native_h: int) -> np.ndarray:
    """Bicubic upsampling of a working-resolution residual to native size."""
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape[1] == native_w and residual.shape[0] == native_h:
        return residual
    return resize_array(residual, native_w, native_h, ResizeMethod.BICUBIC)


def _check_code(code, config: CodecConfig) -> np.ndarray:
    bits = code.bits if isinstance(code, PayloadCode) else PayloadCode(code).bits
    if bits.size != config.payload_length:
        raise CodeLengthMismatch(
            f"code has {bits.size} bits, codec expects {config.payload_length}")
    return bits.astype(np.float64)


def _target(bits: np.ndarray, config: CodecConfig) -> np.ndarray:
    rho = config.detection_share
    c = config.payload_length
    d = math.sqrt(rho)
    # detection carrier appears twice: restricted to the window and to the rest
    return np.concatenate([[d, d], bits * math.sqrt((1.0 - rho) / c)])


def _response_rows(key: SecretKey, config: CodecConfig) -> np.ndarray:
    """Correlator rows the decoder evaluates, as (m, n_slots) float arrays."""
    U = derive_carriers(key, config).astype(np.float64)
    k = len(config.band)
    win = np.repeat(window_mask(config.blocks_per_side).ravel(), k)
    return np.vstack([U[0] * win, U[0] * ~win, U[1:]])


def residual_parts(luma: np.ndarray, bits: np.ndarray, key: SecretKey,
                   config: CodecConfig) -> tuple[np.ndarray, np.ndarray]:
    """Signal and host-cancellation residual planes at working resolution.

    Masked spread-spectrum gains are solved so that the decoder's weighted
    correlations of ``luma + lam * signal + cancel`` equal ``lam`` times the
    target pattern exactly, for any ``lam``.
    """
    n = config.working_resolution
    proj = band_projection(config.band)
    band, ac_energy, oob_rms = block_features(flat_blocks(luma), proj)
    k = band.shape[1]
    strength = np.repeat(masking_strength(ac_energy, config), k)
    weight = np.repeat(decoder_weights(oob_rms, config), k)

    rows = _response_rows(key, config)
    G = (rows * (weight * strength)) @ rows.T
    host = rows @ (weight * band.ravel())
    g_sig = np.linalg.solve(G, np.diag(G) * _target(bits, config))
    g_host = -np.linalg.solve(G, host)

    def plane(g):
        coeff = (strength * (g @ rows)).reshape(-1, k)
        return unflat_blocks(coeff @ proj.T, n, n)

    return plane(g_sig), plane(g_host)


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((a - b) ** 2))


def _max_scale(sig: np.ndarray, cancel: np.ndarray, mse: float) -> float:
    """Largest ``lam`` with ``mean((lam * sig + cancel) ** 2) <= mse``."""
    a, b, c = float(np.sum(sig * sig)), float(np.sum(sig * cancel)), float(np.sum(cancel * cancel))
    budget = mse * sig.size
    disc = b * b - a * (c - budget)
    if a == 0.0 or c >= budget or disc <= 0:
        return 0.0
    return (-b + math.sqrt(disc)) / a


def embed(img: RgbImage, code, key: SecretKey, config: CodecConfig | None = None) -> RgbImage:
    """Watermark ``img`` with payload ``code``; output keeps native size.

    The residual is built at the working resolution.  Its payload part is
    scaled down until both PSNR and SSIM floors hold there, for the float
    result and its 8-bit quantisation alike, then the residual is
    bicubically rescaled onto the native image.  Deterministic in all inputs.
    """
    from ..metrics import ssim

    config = config or CodecConfig()
    bits = _check_code(code, config)
    if not should_watermark(img, config):
        raise NotWatermarkable("content is too uniform to watermark invisibly")
    n = config.working_resolution
    work = img if img.size == (n, n) else resize(img, n, n, ResizeMethod.BICUBIC)
    sig, cancel = residual_parts(to_luma(work).samples, bits, key, config)

    floor_mse = 10.0 ** (-config.psnr_floor / 10.0)
    lam = _max_scale(sig, cancel, 10.0 ** (-(config.psnr_floor + config.psnr_margin) / 10.0))
    if lam <= 0.0:
        raise NotWatermarkable("host cancellation alone exceeds the distortion budget")
    for _ in range(12):
        marked = RgbImage(work.samples + (lam * sig + cancel)[:, :, None])
        q = marked.quantized()
        mse = max(_mse(marked.samples, work.samples), _mse(q.samples, work.samples))
        loss = 1.0 - min(ssim(work, marked), ssim(work, q))
        ok_psnr, ok_ssim = mse <= floor_mse, loss <= 1.0 - config.ssim_floor
        if ok_psnr and ok_ssim:
            break
        shrink = 0.97
        if not ok_ssim:
            shrink = min(shrink, math.sqrt(0.95 * (1.0 - config.ssim_floor) / loss))
        lam *= shrink
    else:
        raise NotWatermarkable("could not meet the quality floors")

    if img.size == (n, n):
        return marked
    delta = rescale_residual(marked.samples - work.samples, img.width, img.height)
    return RgbImage(img.samples + delta)


def embed_plane(plane: ImagePlane, code, key: SecretKey,
                config: CodecConfig | None = None) -> ImagePlane:
    """Grayscale convenience wrapper: the single channel is treated as luma."""
    out = embed(RgbImage(plane.samples), code, key, config)
    return ImagePlane(out.samples[:, :, 0])
