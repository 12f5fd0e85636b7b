"""Image containers, colour conversion, resampling and 8x8 block DCT.

Samples live in ``[0, 1]`` as float64.  The only quantisation point is
:func:`save_image`; every operation here clamps its output.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from PIL import Image, UnidentifiedImageError
from scipy.fft import dctn, idctn

from .errors import MalformedFile, UnsupportedFormat

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
BLOCK = 8
BICUBIC_A = -0.5


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """Single-channel sample plane, shape ``(height, width)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2:
            raise ValueError(f"plane must be 2-D, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("plane samples must be finite")
        object.__setattr__(self, "samples", _frozen(s))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three-channel image, shape ``(height, width, 3)``, clamped to [0, 1]."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = np.repeat(s[:, :, None], 3, axis=2)
        if s.ndim != 3 or s.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("image samples must be finite")
        object.__setattr__(self, "samples", _frozen(np.clip(s, 0.0, 1.0)))

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "RgbImage":
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def to_uint8(self) -> np.ndarray:
        return np.rint(self.samples * 255.0).astype(np.uint8)

    def quantized(self) -> "RgbImage":
        """Round-trip through 8-bit, as saving to PNG would."""
        return RgbImage.from_uint8(self.to_uint8())


class ResizeMethod(str, enum.Enum):
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


# ---------------------------------------------------------------------------
# File I/O

_FORMATS = {"PNG": "PNG", "JPEG": "JPEG"}


def load_image(data: bytes) -> RgbImage:
    """Decode PNG or baseline JPEG bytes into an :class:`RgbImage`."""
    try:
        pil = Image.open(io.BytesIO(data))
    except UnidentifiedImageError as exc:
        raise MalformedFile(f"cannot identify image data: {exc}") from exc
    if pil.format not in _FORMATS:
        raise UnsupportedFormat(f"unsupported image format {pil.format!r}")
    try:
        pil.load()
    except (OSError, SyntaxError, ValueError) as exc:
        raise MalformedFile(f"undecodable {pil.format} stream: {exc}") from exc
    if pil.mode in ("I;16", "I;16B", "I", "F"):
        raise UnsupportedFormat(f"unsupported sample depth (mode {pil.mode})")
    if pil.mode == "L":
        arr = np.asarray(pil)
    else:
        arr = np.asarray(pil.convert("RGB"))
    return RgbImage.from_uint8(arr)


def save_image(img: RgbImage, fmt: str = "PNG", quality: int = 95) -> bytes:
    """Encode to PNG (lossless on 8-bit data) or baseline JPEG."""
    fmt = fmt.upper()
    if fmt == "JPG":
        fmt = "JPEG"
    if fmt not in _FORMATS:
        raise UnsupportedFormat(f"cannot save as {fmt!r}")
    buf = io.BytesIO()
    pil = Image.fromarray(img.to_uint8(), mode="RGB")
    if fmt == "JPEG":
        if not 1 <= quality <= 100:
            raise ValueError("JPEG quality must be in 1..100")
        pil.save(buf, format="JPEG", quality=int(quality), optimize=False)
    else:
        pil.save(buf, format="PNG")
    return buf.getvalue()


def read_image(path) -> RgbImage:
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_image(img: RgbImage, path, fmt: str | None = None, quality: int = 95) -> None:
    if fmt is None:
        fmt = "JPEG" if str(path).lower().endswith((".jpg", ".jpeg")) else "PNG"
    with open(path, "wb") as fh:
        fh.write(save_image(img, fmt, quality))


# ---------------------------------------------------------------------------
# Resampling


def _cubic(t: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


@lru_cache(maxsize=64)
def _weights(n_in: int, n_out: int, method: ResizeMethod) -> sp.csr_matrix:
    """Sparse (n_out, n_in) interpolation matrix with pixel-centre alignment."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(int)
    if method is ResizeMethod.BICUBIC:
        offsets = np.arange(-1, 3)
        kernel = _cubic
    else:
        offsets = np.arange(0, 2)
        kernel = lambda t: np.clip(1.0 - np.abs(t), 0.0, None)  # noqa: E731
    taps = base[:, None] + offsets[None, :]
    w = kernel(src[:, None] - taps)
    w /= w.sum(axis=1, keepdims=True)
    cols = np.clip(taps, 0, n_in - 1)  # edge replication
    rows = np.repeat(np.arange(n_out), len(offsets))
    mat = sp.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(n_out, n_in))
    mat.sum_duplicates()
    return mat


def resize_array(arr: np.ndarray, w: int, h: int,
                 method: ResizeMethod = ResizeMethod.BICUBIC) -> np.ndarray:
    """Separable resize of a (H, W) or (H, W, C) array without clamping."""
    method = ResizeMethod(method)
    if w < 1 or h < 1:
        raise ValueError("target size must be at least 1x1")
    arr = np.asarray(arr, dtype=np.float64)
    in_h, in_w = arr.shape[:2]
    if (in_w, in_h) == (w, h):
        return arr.copy()
    tail = arr.shape[2:]
    flat = arr.reshape(in_h, -1)
    out = _weights(in_h, h, method) @ flat                      # (h, in_w*C)
    out = out.reshape(h, in_w, -1).transpose(1, 0, 2).reshape(in_w, -1)
    out = _weights(in_w, w, method) @ out                       # (w, h*C)
    out = out.reshape(w, h, -1).transpose(1, 0, 2)
    return out.reshape((h, w) + tail)


def resize(img: RgbImage, w: int, h: int,
           method: ResizeMethod = ResizeMethod.BICUBIC) -> RgbImage:
    return RgbImage(resize_array(img.samples, w, h, method))


# ---------------------------------------------------------------------------
# Colour


def to_luma(img: RgbImage) -> ImagePlane:
    return ImagePlane(img.samples @ LUMA_WEIGHTS)


def from_luma(plane: ImagePlane, img: RgbImage) -> RgbImage:
    """Replace the luma of ``img`` by ``plane``, keeping chroma offsets."""
    if (plane.height, plane.width) != (img.height, img.width):
        raise ValueError("plane and image dimensions differ")
    delta = plane.samples - img.samples @ LUMA_WEIGHTS
    return RgbImage(img.samples + delta[:, :, None])


# ---------------------------------------------------------------------------
# Block DCT


def pad_to_blocks(arr: np.ndarray, block: int = BLOCK) -> np.ndarray:
    h, w = arr.shape
    ph, pw = (-h) % block, (-w) % block
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw)), mode="edge")
    return arr


def to_blocks(arr: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """(H, W) with H, W multiples of ``block`` -> (H/b, W/b, b, b) view."""
    h, w = arr.shape
    return arr.reshape(h // block, block, w // block, block).swapaxes(1, 2)


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    by, bx, b, _ = blocks.shape
    return blocks.swapaxes(1, 2).reshape(by * b, bx * b)


def block_dct(plane: ImagePlane | np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Orthonormal type-II DCT of every ``block``x``block`` tile.

    The plane is edge-padded to a multiple of the block size; the result has
    shape ``(rows, cols, block, block)``.
    """
    arr = plane.samples if isinstance(plane, ImagePlane) else np.asarray(plane, float)
    return dctn(to_blocks(pad_to_blocks(arr, block), block), axes=(2, 3), norm="ortho")


def block_idct(coeffs: np.ndarray, height: int | None = None,
               width: int | None = None) -> np.ndarray:
    """Inverse of :func:`block_dct`; crops the padding when a size is given."""
    arr = from_blocks(idctn(coeffs, axes=(2, 3), norm="ortho"))
    if height is not None and width is not None:
        arr = arr[:height, :width]
    return arr
