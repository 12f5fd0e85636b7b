"""Catalogue of the 30 benchmark transformations.

Each transformation has a category, a strength range and a worst-case
strength.  ``apply`` is a pure function of (spec, mode, image, seed): the
strength (random mode) and any randomness inside the transformation are
drawn from generators seeded by ``rng_seed``.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass
from typing import Callable

import cv2
import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage as ndi

from .errors import NoStrength
from .geometry import crop_box, rotate_forward, zoom_canvas
from .imaging import LUMA_WEIGHTS, ResizeMethod, RgbImage, resize, resize_array

CATEGORIES = ("Color", "Combination", "Noise", "Overlay", "Quality", "Spatial")
GRAY = 0.5


@dataclass(frozen=True)
class StrengthMode:
    """``worst`` or ``random``; a random mode may carry its own base seed."""

    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "worst"):
            raise ValueError(f"unknown strength mode {self.kind!r}")

    @classmethod
    def random(cls, seed: int = 0) -> "StrengthMode":
        return cls("random", seed)

    @classmethod
    def worst(cls) -> "StrengthMode":
        return cls("worst")

    @property
    def label(self) -> str:
        return self.kind


RANDOM = StrengthMode.random()
WORST = StrengthMode.worst()


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from any mix of ints and strings."""
    h = hashlib.sha256()
    for p in parts:
        b = str(p).encode() if not isinstance(p, bytes) else p
        h.update(struct.pack(">I", len(b)) + b)
    return int.from_bytes(h.digest()[:8], "big")


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stream))


# ---------------------------------------------------------------------------
# Primitive operations on [0, 1] float arrays


def _luma(x: np.ndarray) -> np.ndarray:
    return x @ LUMA_WEIGHTS


def brightness(x, f):
    return x * f


def contrast(x, f):
    m = float(_luma(x).mean())
    return (x - m) * f + m


def saturation(x, f):
    g = _luma(x)[..., None]
    return g + (x - g) * f


def hue(x, shift):
    # OpenCV float HSV keeps hue in degrees
    hsv = cv2.cvtColor(np.clip(x, 0, 1).astype(np.float32), cv2.COLOR_RGB2HSV)
    hsv[..., 0] = np.mod(hsv[..., 0] + 360.0 * shift, 360.0)
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB).astype(np.float64)


def exposure(x, gamma):
    return np.clip(x, 0, 1) ** gamma


def grayscale(x, _=None):
    return np.repeat(_luma(x)[..., None], 3, axis=2)


def jpeg(x, quality):
    buf = io.BytesIO()
    Image.fromarray(np.rint(np.clip(x, 0, 1) * 255).astype(np.uint8)).save(
        buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def gaussian_blur(x, sigma):
    return ndi.gaussian_filter(x, (sigma, sigma, 0), mode="nearest")


def median_denoise(x, radius):
    k = 2 * int(radius) + 1
    return cv2.medianBlur(np.ascontiguousarray(x, dtype=np.float32), k).astype(np.float64)


_SMOOTH = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


def sharpness(x, f):
    # same blend as the common "sharpness" enhancer: smooth + f * (x - smooth)
    smooth = np.stack([ndi.convolve(x[..., c], _SMOOTH, mode="nearest") for c in range(3)], axis=2)
    return smooth + f * (x - smooth)


def gaussian_noise(x, sigma, rng):
    return x + rng.normal(0.0, sigma, x.shape)


def shot_noise(x, sigma, rng):
    # photon budget chosen so the noise std at mid-gray equals ``sigma``
    lam = GRAY / sigma ** 2
    return rng.poisson(np.clip(x, 0, 1) * lam) / lam


def impulse_noise(x, fraction, rng):
    out = x.copy()
    hit = rng.random(x.shape[:2]) < fraction
    salt = rng.random(x.shape[:2]) < 0.5
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def speckle_noise(x, sigma, rng):
    return x + x * rng.normal(0.0, sigma, x.shape)


def resize_by(x, scale):
    h, w = x.shape[:2]
    return resize_array(x, max(1, int(round(w * scale))), max(1, int(round(h * scale))),
                        ResizeMethod.BICUBIC)


def crop_resize(x, area):
    h, w = x.shape[:2]
    x0, y0, cw, ch = crop_box(w, h, area)
    return resize_array(x[y0:y0 + ch, x0:x0 + cw], w, h, ResizeMethod.BICUBIC)


def zoom_out(x, factor):
    h, w = x.shape[:2]
    cw, ch, ox, oy = zoom_canvas(w, h, factor)
    canvas = np.full((ch, cw, 3), GRAY)
    canvas[oy:oy + h, ox:ox + w] = x
    return resize_array(canvas, w, h, ResizeMethod.BICUBIC)


def rotate(x, degrees):
    """Counter-clockwise rotation about the centre, canvas expanded, gray fill."""
    h, w = x.shape[:2]
    A, b, (W, H) = rotate_forward(w, h, degrees)
    M = np.hstack([A, b[:, None]])
    out = cv2.warpAffine(np.ascontiguousarray(x, dtype=np.float32), M, (W, H),
                         flags=cv2.INTER_CUBIC, borderMode=cv2.BORDER_CONSTANT,
                         borderValue=(GRAY, GRAY, GRAY))
    return out.astype(np.float64)


def quarter_turns(x, degrees):
    return np.rot90(x, int(round(degrees / 90.0)) % 4)


def flip_lr(x, _=None):
    return x[:, ::-1]


def flip_ud(x, _=None):
    return x[::-1]


# -- instagram-like filters: tone curves + contrast / saturation ------------

@dataclass(frozen=True)
class Filter:
    name: str
    curves: tuple  # per channel (input knots, output knots)
    contrast: float
    saturation: float


_ID = ((0.0, 1.0), (0.0, 1.0))
FILTERS = (
    Filter("clarendon", (_ID, _ID, ((0.0, 0.5, 1.0), (0.05, 0.55, 1.0))), 1.2, 1.35),
    Filter("gingham", (((0.0, 1.0), (0.1, 0.95)),) * 3, 0.9, 0.8),
    Filter("juno", (((0.0, 0.5, 1.0), (0.0, 0.56, 1.0)), _ID, ((0.0, 0.5, 1.0), (0.0, 0.44, 0.95))), 1.1, 1.15),
    Filter("lark", (((0.0, 1.0), (0.06, 1.0)), ((0.0, 1.0), (0.06, 1.0)), _ID), 0.95, 0.9),
    Filter("valencia", (((0.0, 0.5, 1.0), (0.08, 0.58, 1.0)), _ID, ((0.0, 1.0), (0.0, 0.9))), 1.4, 1.05),
)
HARSHEST_FILTER = max(range(len(FILTERS)), key=lambda i: FILTERS[i].contrast)


def instagram(x, index):
    f = FILTERS[int(index)]
    y = np.stack([np.interp(x[..., c], *f.curves[c]) for c in range(3)], axis=2)
    return saturation(contrast(y, f.contrast), f.saturation)


# -- overlays ---------------------------------------------------------------

def _icon(kind: int, side: int) -> Image.Image:
    """Procedurally drawn RGBA icon; four shapes make up the shipped set."""
    s = side * 4  # supersample, then shrink
    im = Image.new("RGBA", (s, s), (0, 0, 0, 0))
    d = ImageDraw.Draw(im)
    if kind == 0:  # smiley
        d.ellipse([0, 0, s - 1, s - 1], fill=(255, 204, 0, 255), outline=(120, 80, 0, 255), width=s // 40 + 1)
        e = s // 10
        d.ellipse([s * 0.3 - e, s * 0.35 - e, s * 0.3 + e, s * 0.35 + e], fill=(60, 40, 0, 255))
        d.ellipse([s * 0.7 - e, s * 0.35 - e, s * 0.7 + e, s * 0.35 + e], fill=(60, 40, 0, 255))
        d.arc([s * 0.22, s * 0.3, s * 0.78, s * 0.8], 20, 160, fill=(60, 40, 0, 255), width=s // 20 + 1)
    elif kind == 1:  # heart
        r = s // 4
        d.ellipse([0, 0, 2 * r, 2 * r], fill=(220, 30, 60, 255))
        d.ellipse([2 * r, 0, 4 * r - 1, 2 * r], fill=(220, 30, 60, 255))
        d.polygon([(0, r + r // 3), (s - 1, r + r // 3), (s // 2, s - 1)], fill=(220, 30, 60, 255))
    elif kind == 2:  # star
        pts = []
        for i in range(10):
            rad = s / 2 if i % 2 == 0 else s / 5
            a = math.pi / 2 + i * math.pi / 5
            pts.append((s / 2 + rad * math.cos(a), s / 2 - rad * math.sin(a)))
        d.polygon(pts, fill=(255, 190, 30, 255), outline=(150, 90, 0, 255))
    else:  # thumbs-up-ish blue badge
        d.rounded_rectangle([0, 0, s - 1, s - 1], radius=s // 5, fill=(40, 110, 230, 255))
        d.rectangle([s * 0.3, s * 0.45, s * 0.45, s * 0.8], fill=(255, 255, 255, 255))
        d.polygon([(s * 0.45, s * 0.45), (s * 0.58, s * 0.2), (s * 0.68, s * 0.25),
                   (s * 0.62, s * 0.45), (s * 0.75, s * 0.45), (s * 0.75, s * 0.8),
                   (s * 0.45, s * 0.8)], fill=(255, 255, 255, 255))
    return im.resize((side, side), Image.LANCZOS)


N_ICONS = 4


def emoji_overlay(x, area, rng):
    h, w = x.shape[:2]
    side = max(4, int(round(math.sqrt(area * w * h))))
    side = min(side, w, h)
    icon = np.asarray(_icon(int(rng.integers(N_ICONS)), side), dtype=np.float64) / 255.0
    x0 = int(rng.integers(0, w - side + 1))
    y0 = int(rng.integers(0, h - side + 1))
    out = x.copy()
    a = icon[..., 3:4]
    out[y0:y0 + side, x0:x0 + side] = a * icon[..., :3] + (1 - a) * out[y0:y0 + side, x0:x0 + side]
    return out


_TEXT = ("sample", "preview", "© studio", "draft", "not for sale")


def text_overlay(x, opacity, rng):
    h, w = x.shape[:2]
    size = max(8, h // 12)
    font = ImageFont.load_default(size=size)
    mask = Image.new("L", (w, h), 0)
    d = ImageDraw.Draw(mask)
    for _ in range(3):
        word = _TEXT[int(rng.integers(len(_TEXT)))]
        d.text((int(rng.integers(0, max(1, w - size * 4))), int(rng.integers(0, max(1, h - size)))),
               word, fill=255, font=font)
    a = np.asarray(mask, dtype=np.float64)[..., None] / 255.0 * opacity
    return x * (1 - a) + a


# ---------------------------------------------------------------------------
# Catalogue


@dataclass(frozen=True)
class TransformSpec:
    """One benchmark transformation.

    ``strength_range`` is ``None`` for parameter-free transforms.  ``choices``
    lists the admissible values of discrete strengths; ``signed`` means the
    range bounds a magnitude and random mode also draws a sign.
    """

    id: str
    category: str
    strength_range: tuple[float, float] | None
    worst_strength: object
    units: str = ""
    choices: tuple | None = None
    signed: bool = False
    integer: bool = False
    parts: tuple[str, ...] = ()

    @property
    def parametric(self) -> bool:
        return self.strength_range is not None or bool(self.parts)

    def to_dict(self) -> dict:
        d = {"id": self.id, "category": self.category,
             "strength_range": list(self.strength_range) if self.strength_range else None,
             "worst_strength": list(self.worst_strength) if isinstance(self.worst_strength, tuple)
             else self.worst_strength,
             "units": self.units}
        if self.choices:
            d["choices"] = list(self.choices)
        if self.signed:
            d["signed"] = True
        if self.parts:
            d["parts"] = list(self.parts)
        return d


def _spec(id, category, rng_=None, worst=None, units="", **kw) -> TransformSpec:
    return TransformSpec(id, category, rng_, worst, units, **kw)


_SPECS = [
    _spec("identity", "Identity"),
    # Color
    _spec("brightness", "Color", (0.5, 1.5), 0.5, "factor"),
    _spec("contrast", "Color", (0.5, 1.5), 0.5, "factor"),
    _spec("saturation", "Color", (0.5, 1.5), 0.5, "factor"),
    _spec("hue", "Color", (-0.1, 0.1), 0.1, "turns"),
    _spec("exposure", "Color", (0.5, 2.0), 2.0, "gamma"),
    _spec("grayscale", "Color"),
    _spec("instagram", "Color", (0, len(FILTERS) - 1), HARSHEST_FILTER, "filter index",
          choices=tuple(range(len(FILTERS)))),
    # Quality
    _spec("file format", "Quality", (40, 95), 40, "JPEG quality", integer=True),
    _spec("gaussian blur", "Quality", (0.5, 2.0), 2.0, "sigma px"),
    _spec("denoise", "Quality", (1, 2), 2, "median radius px", choices=(1, 2)),
    _spec("sharpness", "Quality", (1.0, 2.0), 2.0, "factor"),
    # Noise
    _spec("gaussian noise", "Noise", (0.01, 0.05), 0.05, "sigma"),
    _spec("shot noise", "Noise", (0.01, 0.05), 0.05, "sigma at mid-gray"),
    _spec("impulse noise", "Noise", (0.005, 0.02), 0.02, "pixel fraction"),
    _spec("speckle noise", "Noise", (0.01, 0.05), 0.05, "sigma"),
    # Overlay
    _spec("emoji overlay", "Overlay", (0.02, 0.10), 0.10, "area fraction"),
    _spec("light text overlay", "Overlay", (0.2, 0.5), 0.5, "opacity"),
    # Spatial
    _spec("resize", "Spatial", (0.5, 1.5), 0.5, "scale"),
    _spec("crop resize", "Spatial", (0.6, 0.95), 0.6, "retained area"),
    _spec("zoom out", "Spatial", (1.1, 1.5), 1.5, "pad factor"),
    _spec("rotation", "Spatial", (5.0, 30.0), 30.0, "degrees", signed=True),
    _spec("small rotation", "Spatial", (-2.0, 2.0), 2.0, "degrees"),
    _spec("all rotations", "Spatial", (90, 270), 180, "degrees", choices=(90, 180, 270)),
    _spec("flip left-right", "Spatial"),
    _spec("flip up-down", "Spatial"),
    # Combination: geometry first, then brightness, JPEG last
    _spec("combined", "Combination", worst=(0.6, 0.5, 40),
          parts=("crop resize", "brightness", "file format")),
    _spec("combined nocrop", "Combination", worst=(0.5, 40), parts=("brightness", "file format")),
    _spec("combined rotate", "Combination", worst=(30.0, 0.6, 0.5, 40),
          parts=("rotation", "crop resize", "brightness", "file format")),
    _spec("combined nocrop rotate", "Combination", worst=(30.0, 0.5, 40),
          parts=("rotation", "brightness", "file format")),
]
CATALOG: dict[str, TransformSpec] = {s.id: s for s in _SPECS}

_OPS: dict[str, Callable] = {
    "identity": lambda x, s: x,
    "brightness": brightness, "contrast": contrast, "saturation": saturation, "hue": hue,
    "exposure": exposure, "grayscale": grayscale, "instagram": instagram,
    "file format": jpeg, "gaussian blur": gaussian_blur, "denoise": median_denoise,
    "sharpness": sharpness,
    "resize": resize_by, "crop resize": crop_resize, "zoom out": zoom_out,
    "rotation": rotate, "small rotation": rotate, "all rotations": quarter_turns,
    "flip left-right": flip_lr, "flip up-down": flip_ud,
}
_NOISY: dict[str, Callable] = {
    "gaussian noise": gaussian_noise, "shot noise": shot_noise,
    "impulse noise": impulse_noise, "speckle noise": speckle_noise,
    "emoji overlay": emoji_overlay, "light text overlay": text_overlay,
}


def list_transforms() -> list[TransformSpec]:
    return list(_SPECS)


def get(transform_id: str) -> TransformSpec:
    try:
        return CATALOG[transform_id]
    except KeyError:
        raise KeyError(f"unknown transform {transform_id!r}") from None


def sample_strength(spec: TransformSpec | str, rng_seed: int):
    """Uniform draw from the transform's random range (a tuple for combinations)."""
    spec = get(spec) if isinstance(spec, str) else spec
    if not spec.parametric:
        raise NoStrength(f"{spec.id} has no strength parameter")
    if spec.parts:
        return tuple(sample_strength(p, derive_seed(rng_seed, spec.id, i))
                     for i, p in enumerate(spec.parts))
    rng = _rng(rng_seed, "strength/" + spec.id)
    if spec.choices:
        return spec.choices[int(rng.integers(len(spec.choices)))]
    lo, hi = spec.strength_range
    if spec.integer:
        return int(rng.integers(int(lo), int(hi) + 1))
    v = float(rng.uniform(lo, hi))
    if spec.signed and rng.random() < 0.5:
        v = -v
    return v


def resolve_strength(spec: TransformSpec, mode: StrengthMode, rng_seed: int):
    if not spec.parametric:
        return None
    if mode.kind == "worst":
        return spec.worst_strength
    return sample_strength(spec, derive_seed(mode.seed, rng_seed))


def apply_array(spec: TransformSpec | str, strength, x: np.ndarray, rng_seed: int) -> np.ndarray:
    """Apply ``spec`` at an explicit strength to a float array (unclamped input ok)."""
    spec = get(spec) if isinstance(spec, str) else spec
    if spec.parts:
        for i, (part, s) in enumerate(zip(spec.parts, strength)):
            x = np.clip(apply_array(part, s, x, derive_seed(rng_seed, spec.id, i)), 0.0, 1.0)
        return x
    if spec.id in _NOISY:
        return _NOISY[spec.id](x, strength, _rng(rng_seed, "noise/" + spec.id))
    return _OPS[spec.id](x, strength)


def apply(spec: TransformSpec | str, mode: StrengthMode, img: RgbImage, rng_seed: int) -> RgbImage:
    """Transformed copy of ``img``; identity returns ``img`` itself."""
    spec = get(spec) if isinstance(spec, str) else spec
    if spec.id == "identity":
        return img
    strength = resolve_strength(spec, mode, rng_seed)
    out = apply_array(spec, strength, np.array(img.samples), rng_seed)
    return RgbImage(np.clip(out, 0.0, 1.0))


def catalog_json() -> str:
    """Self-describing catalogue document embedded in benchmark reports."""
    doc = {"version": 1, "categories": list(CATEGORIES),
           "transforms": [s.to_dict() for s in _SPECS],
           "instagram_filters": [f.name for f in FILTERS]}
    return json.dumps(doc, sort_keys=True, indent=2)


def resized_back(img: RgbImage, w: int, h: int) -> RgbImage:
    """Convenience for comparisons against an original of size ``(w, h)``."""
    return img if img.size == (w, h) else resize(img, w, h, ResizeMethod.BICUBIC)
