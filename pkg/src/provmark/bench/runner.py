"""End-to-end benchmark: embed, transform both arms, decode, score.

Every (image, transform, mode) cell decodes a watermarked image and its
unwatermarked original after the same transformation with the same seed.
A single threshold kappa is calibrated on the worst-case negatives, with
each transform's false positive rate weighted equally, and every row of the
report is read off at that one threshold.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import transforms as T
from ..codec import CodecConfig, Decoder, PayloadCode, SecretKey, embed, should_watermark
from ..decision import CalibrationSet, Verdict, decide
from ..errors import InsufficientNegatives
from ..imaging import ResizeMethod, RgbImage, read_image, resize
from ..metrics import bit_accuracy, calibrate_kappa, code_accuracy, psnr, ssim
from ..payload import PayloadRegistry
from .corpus import dataset_digest, list_dataset
from .report import BenchReport, Row, summarize

REGIMES = ("fixed", "native-image", "native-model")


def bench_key(seed: int) -> SecretKey:
    """Deterministic key for reproducible benchmark runs."""
    return SecretKey(hashlib.sha256(f"provmark-bench-key|{seed}".encode()).digest(), "bench")


@dataclass(frozen=True)
class BenchConfig:
    """Everything that determines a benchmark report."""

    dataset: str
    max_images: int | None = None
    resolution: str = "fixed"
    fixed_size: int = 512
    target_fpr: float = 0.001
    run_seed: int = 0
    transforms: tuple[str, ...] | None = None
    modes: tuple[str, ...] = ("random", "worst")
    codec: CodecConfig = field(default_factory=CodecConfig)
    key: SecretKey | None = None
    registry: str | None = None
    alpha: float = 0.01
    workers: int = 1

    def __post_init__(self):
        if self.resolution not in REGIMES:
            raise ValueError(f"resolution must be one of {REGIMES}")
        if "worst" not in self.modes or not set(self.modes) <= {"random", "worst"}:
            raise ValueError("modes must include 'worst' (kappa is calibrated there)")
        if not 0.0 < self.target_fpr < 1.0:
            raise ValueError("target_fpr must lie in (0, 1)")
        if self.transforms is not None:
            for t in self.transforms:
                T.get(t)
            object.__setattr__(self, "transforms", tuple(self.transforms))
        object.__setattr__(self, "modes", tuple(m for m in ("random", "worst") if m in self.modes))

    @property
    def transform_ids(self) -> tuple[str, ...]:
        return self.transforms or tuple(s.id for s in T.list_transforms())

    @property
    def secret(self) -> SecretKey:
        return self.key or bench_key(self.run_seed)

    def to_dict(self) -> dict:
        """Reproducibility record (key fingerprint only, no key material)."""
        key = self.secret
        return {
            "dataset": Path(self.dataset).name,
            "max_images": self.max_images,
            "resolution": self.resolution,
            "fixed_size": self.fixed_size,
            "target_fpr": self.target_fpr,
            "run_seed": self.run_seed,
            "transforms": list(self.transform_ids),
            "modes": list(self.modes),
            "codec": asdict(self.codec),
            "key_id": key.key_id,
            "key_fingerprint": hashlib.sha256(key.material).hexdigest()[:16],
            "alpha": self.alpha,
            "method": "reference",
        }


@dataclass(frozen=True)
class Cell:
    image: int
    transform: str
    category: str
    mode: str
    pos: float
    neg: float
    bit_accuracy: float
    code_accuracy: int


@dataclass(frozen=True)
class ImageResult:
    index: int
    filtered: bool
    psnr: float = float("nan")
    ssim: float = float("nan")
    cells: tuple = ()
    embed_s: float = 0.0
    decode_s: float = 0.0
    decodes: int = 0


def prepare(img: RgbImage, config: BenchConfig) -> RgbImage:
    """Bring a dataset image to the regime's evaluation resolution."""
    if config.resolution == "native-image":
        return img
    n = config.fixed_size if config.resolution == "fixed" else config.codec.working_resolution
    if img.size == (n, n):
        return img
    return resize(img, n, n, ResizeMethod.BICUBIC).quantized()


def payload_codes(n: int, config: BenchConfig) -> list[PayloadCode]:
    """Per-image payloads: registry entries round robin, else seeded random."""
    if config.registry:
        reg = PayloadRegistry.load(config.registry)
        codes = [e.code for e in reg.entries()]
        if codes:
            return [codes[i % len(codes)] for i in range(n)]
    out = []
    for i in range(n):
        rng = np.random.default_rng(T.derive_seed(config.run_seed, "payload", i))
        out.append(PayloadCode.random(config.codec.payload_length, rng))
    return out


def _mode(kind: str, config: BenchConfig) -> T.StrengthMode:
    return T.StrengthMode.random(config.run_seed) if kind == "random" else T.WORST


def run_image(index: int, path, code: PayloadCode, config: BenchConfig,
              decoder: Decoder | None = None) -> ImageResult:
    """All cells of one image."""
    img = prepare(read_image(path), config)
    if not should_watermark(img, config.codec):
        return ImageResult(index, True)
    decoder = decoder or Decoder(config.secret, config.codec)
    t0 = time.perf_counter()
    marked = embed(img, code, config.secret, config.codec).quantized()
    embed_s = time.perf_counter() - t0
    cells, decode_s, decodes = [], 0.0, 0
    for tid in config.transform_ids:
        spec = T.get(tid)
        seed = T.derive_seed(config.run_seed, index, tid)
        for kind in config.modes:
            mode = _mode(kind, config)
            pos = T.apply(spec, mode, marked, seed).quantized()
            neg = T.apply(spec, mode, img, seed).quantized()
            t1 = time.perf_counter()
            rp, rn = decoder.decode(pos), decoder.decode(neg)
            decode_s += time.perf_counter() - t1
            decodes += 2
            cells.append(Cell(index, tid, spec.category, kind, rp.detection_logit,
                              rn.detection_logit, bit_accuracy(rp.bit_logits, code),
                              code_accuracy(rp.bit_logits, code)))
    return ImageResult(index, False, psnr(img, marked), ssim(img, marked), tuple(cells),
                       embed_s, decode_s, decodes)


def _run_image_job(args) -> ImageResult:
    return run_image(*args)


def _fold_calibration(cells: list[Cell], fold: int) -> CalibrationSet | None:
    """Worst-case scores of the images outside ``fold`` (two-fold cross fit)."""
    other = [c for c in cells if c.mode == "worst" and c.image % 2 != fold]
    if not other:
        return None
    return CalibrationSet([c.neg for c in other], [c.pos for c in other],
                          provenance={"fold": 1 - fold})


def _abstention(cells: list[Cell], calibs: dict, alpha: float) -> float:
    n = 0
    abstain = 0
    for c in cells:
        calib = calibs.get(c.image % 2) or calibs.get(1 - c.image % 2)
        for s in (c.pos, c.neg):
            n += 1
            abstain += decide(s, calib, alpha).verdict is Verdict.ABSTAIN
    return abstain / n if n else 0.0


def build_report(config: BenchConfig, results: list[ImageResult], dataset: dict) -> BenchReport:
    """Reduce per-image results into a report; independent of result order."""
    results = sorted(results, key=lambda r: r.index)
    kept = [r for r in results if not r.filtered]
    cells = [c for r in kept for c in r.cells]
    worst_neg: dict[str, list[float]] = {}
    for c in cells:
        if c.mode == "worst":
            worst_neg.setdefault(c.transform, []).append(c.neg)
    total = sum(len(v) for v in worst_neg.values())
    if total < int(np.ceil(1.0 / config.target_fpr - 1e-9)):
        raise InsufficientNegatives(
            f"{total} worst-case negatives cannot resolve a {config.target_fpr:g} FPR target")
    op = calibrate_kappa(worst_neg, config.target_fpr)
    calibs = {f: _fold_calibration(cells, f) for f in (0, 1)}
    psnr_mean = float(np.mean([r.psnr for r in kept]))
    ssim_mean = float(np.mean([r.ssim for r in kept]))

    rows = []
    for tid in config.transform_ids:
        spec = T.get(tid)
        for kind in config.modes:
            group = [c for c in cells if c.transform == tid and c.mode == kind]
            pos = np.array([c.pos for c in group])
            neg = np.array([c.neg for c in group])
            lo, hi = op.tpr_bracket(pos)
            rows.append(Row(
                tid, "transform", spec.category, kind, len(group), lo, hi,
                float(np.mean(neg > op.kappa)),
                float(np.mean([c.bit_accuracy for c in group])),
                float(np.mean([c.code_accuracy for c in group])),
                _abstention(group, calibs, config.alpha), psnr_mean, ssim_mean))

    quality = {
        "n_embedded": len(kept),
        "psnr_mean": round(psnr_mean, 4),
        "psnr_min": round(float(min(r.psnr for r in kept)), 4),
        "ssim_mean": round(ssim_mean, 6),
        "ssim_min": round(float(min(r.ssim for r in kept)), 6),
        "psnr_below_floor": sum(r.psnr < config.codec.psnr_floor for r in kept),
        "ssim_below_floor": sum(r.ssim < config.codec.ssim_floor for r in kept),
    }
    opd = {k: (round(v, 10) if isinstance(v, float) else v) for k, v in op.to_dict().items()}
    dataset = dict(dataset, n_images=len(kept), n_filtered=len(results) - len(kept))
    n_dec = sum(r.decodes for r in kept)
    timings = {
        "embed_mean_s": float(np.mean([r.embed_s for r in kept])),
        "decode_mean_s": sum(r.decode_s for r in kept) / max(n_dec, 1),
    }
    return BenchReport(config.to_dict(), dataset, opd, quality, summarize(rows),
                       json.loads(T.catalog_json()), cells, timings)


def run_benchmark(config: BenchConfig, progress=None) -> BenchReport:
    """Run the full pipeline; deterministic in ``config``.

    ``progress`` is an optional callable receiving ``(done, total)``.
    """
    t0 = time.perf_counter()
    files = list_dataset(config.dataset, config.max_images)
    codes = payload_codes(len(files), config)
    jobs = [(i, p, codes[i], config) for i, p in enumerate(files)]
    results = []
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            for r in pool.map(_run_image_job, jobs):
                results.append(r)
                if progress:
                    progress(len(results), len(jobs))
    else:
        decoder = Decoder(config.secret, config.codec)
        for job in jobs:
            results.append(run_image(*job, decoder=decoder))
            if progress:
                progress(len(results), len(jobs))
    dataset = {"name": Path(config.dataset).name, "n_files": len(files),
               "digest": dataset_digest(files)}
    report = build_report(config, results, dataset)
    if config.registry:
        report.config["registry_sha256"] = PayloadRegistry.load(config.registry).content_hash
    report.timings["total_s"] = time.perf_counter() - t0
    return report

