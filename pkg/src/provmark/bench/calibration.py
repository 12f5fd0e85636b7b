"""Calibration sets for deployment decisions."""
from __future__ import annotations

import numpy as np

from .. import transforms as T
from ..codec import CodecConfig, Decoder, PayloadCode, SecretKey, embed, should_watermark
from ..decision import CalibrationSet
from ..imaging import read_image
from .corpus import dataset_digest

# rotation followed by cropping is outside what the reference decoder
# re-synchronises; keeping it would make most unwatermarked images abstain
DEFAULT_EXCLUDE = ("combined rotate",)


def default_transforms() -> tuple[str, ...]:
    return tuple(s.id for s in T.list_transforms() if s.id not in DEFAULT_EXCLUDE)


def build_calibration(files, key: SecretKey, config: CodecConfig | None = None,
                      transforms=None, mode: str = "worst", seed: int = 0,
                      progress=None) -> CalibrationSet:
    """Scores of every (image, transform) pair on both arms.

    ``scores0`` come from the unwatermarked images, ``scores1`` from their
    watermarked copies (seeded random payloads); ``per_bit`` pools the bit
    logits of the watermarked copies signed by the true bits.
    """
    config = config or CodecConfig()
    transforms = tuple(transforms or default_transforms())
    decoder = Decoder(key, config)
    smode = T.WORST if mode == "worst" else T.StrengthMode.random(seed)
    s0, s1, bits = [], [], []
    used = 0
    for i, path in enumerate(files):
        img = read_image(path)
        if not should_watermark(img, config):
            continue
        used += 1
        code = PayloadCode.random(config.payload_length,
                                  np.random.default_rng(T.derive_seed(seed, "calib-code", i)))
        marked = embed(img, code, key, config).quantized()
        for tid in transforms:
            rs = T.derive_seed(seed, i, tid)
            neg = decoder.decode(T.apply(tid, smode, img, rs).quantized())
            pos = decoder.decode(T.apply(tid, smode, marked, rs).quantized())
            s0.append(neg.detection_logit)
            s1.append(pos.detection_logit)
            bits.append(pos.bit_logits * code.bits)
        if progress:
            progress(i + 1, len(files))
    provenance = {
        "dataset_digest": dataset_digest(files), "n_images": used, "mode": mode,
        "transforms": list(transforms), "seed": seed, "key_id": key.key_id,
    }
    return CalibrationSet(s0, s1, np.concatenate(bits) if bits else None, provenance)
