from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from ..imaging import BLOCK

#: Low-mid mixed frequencies.  Pure horizontal/vertical terms are left out:
#: smooth gradients leak into them across block edges once an image is blurred.
DEFAULT_BAND: tuple[tuple[int, int], ...] = ((1, 1), (1, 2), (2, 1))

#: Classic mid band, every (u, v) with 3 <= u + v <= 5.
MID_BAND: tuple[tuple[int, int], ...] = tuple(
    (u, v) for u in range(BLOCK) for v in range(BLOCK) if 3 <= u + v <= 5
)


@dataclass(frozen=True)
class CodecConfig:
    """Parameters of the keyed spread-spectrum codec.

    Per-block embedding strength is ``base * m(E) ** masking_exponent`` where
    ``E`` is the block's mean squared AC coefficient and
    ``m(E) = E * knee / (E + knee)`` saturates in busy blocks (``knee = 0``
    disables the saturation).  Global PSNR and SSIM backstops then rescale it
    downward if needed.  ``detection_share`` is the fraction of watermark
    energy given to the detection carrier; the payload carriers share the rest.
    The decoder weighs blocks by ``(oob_rms + weight_floor) ** weight_exponent``.
    """

    working_resolution: int = 512
    payload_length: int = 64
    psnr_floor: float = 42.0
    band: tuple[tuple[int, int], ...] = field(default=DEFAULT_BAND)
    base_strength: float = 1.0
    masking_exponent: float = 0.5
    masking_knee: float = 1e-4
    detection_share: float = 0.2
    psnr_margin: float = 0.05
    ssim_floor: float = 0.98
    energy_floor: float = 1e-8
    weight_floor: float = 0.004
    weight_exponent: float = -1.5

    def __post_init__(self):
        object.__setattr__(self, "band", tuple(tuple(int(i) for i in p) for p in self.band))
        if self.payload_length < 8:
            raise ValueError("payload_length must be at least 8")
        if not self.psnr_floor > 30.0:
            raise ValueError("psnr_floor must exceed 30 dB")
        if (0, 0) in self.band:
            raise ValueError("band must exclude the DC coefficient")
        if not self.band or len(set(self.band)) != len(self.band):
            raise ValueError("band must be a non-empty set of index pairs")
        if any(not (0 <= u < BLOCK and 0 <= v < BLOCK) for u, v in self.band):
            raise ValueError("band indices must lie in the 8x8 grid")
        if self.working_resolution < 64 or self.working_resolution % (4 * BLOCK):
            raise ValueError("working_resolution must be >= 64 and a multiple of 32")
        if not 0.0 < self.detection_share < 1.0:
            raise ValueError("detection_share must lie in (0, 1)")
        if self.masking_knee < 0 or self.weight_floor <= 0:
            raise ValueError("masking_knee must be >= 0 and weight_floor > 0")
        if not 0.0 < self.ssim_floor < 1.0:
            raise ValueError("ssim_floor must lie in (0, 1)")
        if self.base_strength <= 0:
            raise ValueError("base_strength must be positive")

    @property
    def blocks_per_side(self) -> int:
        return self.working_resolution // BLOCK

    @property
    def n_slots(self) -> int:
        return self.blocks_per_side ** 2 * len(self.band)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = [list(p) for p in self.band]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        d = dict(d)
        if "band" in d:
            d["band"] = tuple(tuple(p) for p in d["band"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
