"""Synthetic photo corpus and dataset directory handling.

``build_corpus`` writes randomized crops of the photographs bundled with
scikit-image as 8-bit PNGs, so benchmarks run without any download.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from skimage.transform import resize as sk_resize

from ..errors import DatasetEmpty
from ..imaging import RgbImage, read_image, write_image

COLOR_SOURCES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry",
                 "hubble_deep_field", "retina")
GRAY_SOURCES = ("camera", "coins", "brick", "grass", "gravel", "clock", "moon")
EXTENSIONS = (".png", ".jpg", ".jpeg")


def _sources() -> list[np.ndarray]:
    import skimage.data

    out = []
    for name in COLOR_SOURCES + GRAY_SOURCES:
        a = getattr(skimage.data, name)().astype(np.float64) / 255.0
        if a.ndim == 2:
            a = np.repeat(a[:, :, None], 3, axis=2)
        out.append(a[:, :, :3])
    return out


def synth_photo(src: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random square crop, flip, colour balance and gamma of one source."""
    h, w = src.shape[:2]
    side = int(rng.uniform(0.35, 1.0) * min(h, w))
    y = int(rng.integers(0, h - side + 1))
    x = int(rng.integers(0, w - side + 1))
    crop = src[y:y + side, x:x + side]
    out = sk_resize(crop, (size, size), order=3, anti_aliasing=side > size, mode="edge")
    if rng.random() < 0.5:
        out = out[:, ::-1]
    if np.ptp(src[:, :, 0] - src[:, :, 1]) == 0:  # grayscale source: mild tint
        out = out * rng.uniform(0.85, 1.15, 3)
    else:
        out = out * rng.uniform(0.9, 1.1, 3)
    out = np.clip(out, 0.0, 1.0) ** rng.uniform(0.8, 1.25)
    return np.clip(out, 0.0, 1.0)


def build_corpus(dest, n: int = 200, size: int = 512, seed: int = 0) -> list[Path]:
    """Write ``n`` synthetic photos ``img_0000.png ...`` into ``dest``."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    sources = _sources()
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        src = sources[i % len(sources)]
        img = RgbImage(synth_photo(src, size, rng)).quantized()
        p = dest / f"img_{i:04d}.png"
        write_image(img, p)
        paths.append(p)
    return paths


def list_dataset(path, max_images: int | None = None) -> list[Path]:
    """PNG/JPEG files of a directory in lexicographic order."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetEmpty(f"{root} is not a directory")
    files = sorted(p for p in root.iterdir()
                   if p.is_file() and p.suffix.lower() in EXTENSIONS)
    if max_images is not None:
        files = files[:max_images]
    if not files:
        raise DatasetEmpty(f"no PNG/JPEG images in {root}")
    return files


def dataset_digest(files) -> str:
    """Content hash over file names and bytes, independent of location."""
    h = hashlib.sha256()
    for p in files:
        p = Path(p)
        h.update(p.name.encode() + b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def load_images(files) -> list[RgbImage]:
    return [read_image(p) for p in files]
