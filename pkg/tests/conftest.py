"""Shared fixtures.

The synthetic corpus is deterministic, so it is built once and cached in the
pytest cache directory (override with ``PROVMARK_TEST_CACHE``).  Acceptance
tests report through the ``criterion`` fixture; the verdicts are printed as
one line per criterion at the end of the run.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np
import pytest

from provmark.bench import build_corpus, list_dataset
from provmark.codec import CodecConfig, PayloadCode, SecretKey, embed
from provmark.imaging import RgbImage, read_image

CORPUS_N = 200
CORPUS_SEED = 0
_RESULTS: dict[int, dict] = {}


def _cache_root(config) -> Path:
    env = os.environ.get("PROVMARK_TEST_CACHE")
    if env:
        return Path(env)
    cache = getattr(config, "cache", None)
    if cache is not None:
        return Path(cache.mkdir("provmark"))
    return Path(config.rootpath) / ".provmark-cache"


def cached_corpus(config, name: str, n: int, seed: int) -> Path:
    dest = _cache_root(config) / name
    if not dest.is_dir() or len(list(dest.glob("img_*.png"))) != n:
        build_corpus(dest, n=n, seed=seed)
    return dest


@pytest.fixture(scope="session")
def key() -> SecretKey:
    return SecretKey(hashlib.sha256(b"provmark tests").digest(), "test")


@pytest.fixture(scope="session")
def other_key() -> SecretKey:
    return SecretKey(hashlib.sha256(b"provmark tests, second key").digest(), "other")


@pytest.fixture(scope="session")
def config() -> CodecConfig:
    return CodecConfig()


@pytest.fixture(scope="session")
def corpus_dir(request) -> Path:
    return cached_corpus(request.config, f"corpus-{CORPUS_N}-s{CORPUS_SEED}", CORPUS_N, CORPUS_SEED)


@pytest.fixture(scope="session")
def corpus_files(corpus_dir) -> list[Path]:
    return list_dataset(corpus_dir)


@pytest.fixture(scope="session")
def small_corpus(request) -> Path:
    """Eight images with their own seed, for the quicker integration tests."""
    return cached_corpus(request.config, "corpus-8-s7", 8, 7)


# a spread over every category, cheap enough for a session fixture
CALIB_TRANSFORMS = ("identity", "brightness", "hue", "instagram", "file format", "gaussian blur",
                    "gaussian noise", "impulse noise", "emoji overlay", "crop resize", "rotation",
                    "flip left-right", "combined nocrop")


@pytest.fixture(scope="session")
def calib_corpus(request) -> Path:
    """Disjoint from every image the tests verify."""
    return cached_corpus(request.config, "corpus-8-s11", 8, 11)


@pytest.fixture(scope="session")
def calibration(calib_corpus, key, config):
    from provmark.bench.calibration import build_calibration

    return build_calibration(list_dataset(calib_corpus), key, config, CALIB_TRANSFORMS)


@pytest.fixture(scope="session")
def calibration_file(calibration, tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("calib") / "calibration.json"
    calibration.save(path)
    return path


@pytest.fixture(scope="session")
def photos(small_corpus) -> list[RgbImage]:
    return [read_image(p) for p in list_dataset(small_corpus)]


@pytest.fixture(scope="session")
def photo(photos) -> RgbImage:
    return photos[0]


@pytest.fixture(scope="session")
def code(config) -> PayloadCode:
    return PayloadCode.random(config.payload_length, np.random.default_rng(2024))


@pytest.fixture(scope="session")
def marked(photo, code, key, config) -> RgbImage:
    return embed(photo, code, key, config).quantized()


@pytest.fixture
def criterion():
    """``record(number, title, passed, detail)``; parts of one criterion are AND-ed."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        slot = _RESULTS.setdefault(number, {"title": title, "passed": True, "details": []})
        slot["passed"] = slot["passed"] and bool(passed)
        if detail:
            slot["details"].append(detail)
        print(f"criterion {number} [{title}] {'PASS' if passed else 'FAIL'}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        r = _RESULTS[n]
        status = "PASS" if r["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {n} {r['title']}: {status} | " + "; ".join(r["details"]))
