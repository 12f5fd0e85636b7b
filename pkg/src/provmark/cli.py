"""Command line interface.

Exit codes: ``embed`` 0 ok, 2 content not watermarkable, 1 other errors;
``detect`` 0 watermarked, 3 not watermarked, 4 abstain, 1 errors.
Key, calibration and registry paths default to ``PROVMARK_KEY_FILE``,
``PROVMARK_CALIBRATION`` and ``PROVMARK_REGISTRY``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
from pathlib import Path

from . import __version__

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_WATERMARKABLE = 2
EXIT_NOT_WATERMARKED = 3
EXIT_ABSTAIN = 4
VERDICT_EXIT = {"watermarked": EXIT_OK, "not_watermarked": EXIT_NOT_WATERMARKED,
                "abstain": EXIT_ABSTAIN}

ENV = {"key_file": "PROVMARK_KEY_FILE", "calibration": "PROVMARK_CALIBRATION",
       "registry": "PROVMARK_REGISTRY"}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 like every other failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _env_default(args, name: str, required: bool, parser) -> str | None:
    value = getattr(args, name) or os.environ.get(ENV[name])
    if required and not value:
        parser.error(f"--{name.replace('_', '-')} is required (or set {ENV[name]})")
    setattr(args, name, value)
    return value


def _fail(msg: str, code: int = EXIT_ERROR) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


# subcommands ---------------------------------------------------------------

def cmd_keygen(args) -> int:
    from .codec import SecretKey

    out = Path(args.out)
    if out.exists() and not args.force:
        return _fail(f"{out} exists (use --force to overwrite)")
    SecretKey.generate(args.key_id).save(out)
    out.chmod(0o600)
    print(f"wrote key {args.key_id!r} to {out}")
    return EXIT_OK


def _open_registry(path, create: bool = True):
    from .payload import PayloadRegistry

    if path and Path(path).exists():
        return PayloadRegistry.load(path)
    if path and not create:
        raise FileNotFoundError(path)
    return PayloadRegistry()


def cmd_embed(args) -> int:
    from .codec import SecretKey, embed
    from .errors import NotWatermarkable
    from .imaging import read_image, write_image
    from .metrics import psnr

    key = SecretKey.load(args.key_file)
    reg = _open_registry(args.registry)
    img = read_image(args.input)
    code = reg.assign_code(args.customer_id, args.version)
    try:
        marked = embed(img, code, key).quantized()
    except NotWatermarkable as e:
        print(f"not watermarkable: {e}", file=sys.stderr)
        return EXIT_NOT_WATERMARKABLE
    write_image(marked, args.out, quality=args.jpeg_quality)
    if args.registry:
        reg.save(args.registry)
    print(f"psnr={psnr(img, marked):.2f} payload_id={args.customer_id} "
          f"version={args.version} code={code.to_string()}")
    return EXIT_OK


def _verifier(args):
    from .codec import SecretKey
    from .decision import CalibrationSet
    from .service import Snapshot, Verifier

    key = SecretKey.load(args.key_file)
    calib = CalibrationSet.load(args.calibration)
    reg = _open_registry(args.registry, create=False) if args.registry else None
    return Verifier(Snapshot(key, calib, reg, alpha=args.alpha))


def cmd_detect(args) -> int:
    from .imaging import read_image

    verifier = _verifier(args)
    result = verifier.verify(read_image(args.input), include_logits=not args.redact_logits)
    print(json.dumps(result, sort_keys=True))
    return VERDICT_EXIT[result["verdict"]]


def _progress(label: str):
    def report(done, total):
        print(f"\r{label} {done}/{total}", end="" if done < total else "\n", file=sys.stderr)
    return report


def cmd_calibrate(args) -> int:
    from .bench.calibration import build_calibration
    from .bench.corpus import list_dataset
    from .codec import SecretKey

    key = SecretKey.load(args.key_file)
    files = list_dataset(args.dataset, args.max_images)
    transforms = args.transforms.split(",") if args.transforms else None
    calib = build_calibration(files, key, transforms=transforms, mode=args.mode,
                              seed=args.seed, progress=None if args.quiet else _progress("calibrate"))
    calib.save(args.out)
    print(f"wrote {calib.scores0.size}+{calib.scores1.size} scores to {args.out} "
          f"sha256={calib.content_hash}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .bench import BenchConfig, render_report, run_benchmark
    from .codec import SecretKey

    key = SecretKey.load(args.key_file) if args.key_file else None
    config = BenchConfig(
        dataset=args.dataset, max_images=args.max_images, resolution=args.resolution,
        target_fpr=args.target_fpr, run_seed=args.seed,
        transforms=tuple(args.transforms.split(",")) if args.transforms else None,
        modes=tuple(args.modes.split(",")), key=key, registry=args.registry,
        workers=args.workers)
    report = run_benchmark(config, progress=None if args.quiet else _progress("benchmark"))
    data = render_report(report, args.format)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode())
    t = report.timings
    print(f"embed {t['embed_mean_s'] * 1e3:.0f} ms/image, decode {t['decode_mean_s'] * 1e3:.0f}"
          f" ms/image, total {t['total_s']:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_corpus(args) -> int:
    from .bench.corpus import build_corpus

    paths = build_corpus(args.out, args.n, args.size, args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


def cmd_registry(args) -> int:
    from .payload import PayloadRegistry

    if args.action == "init":
        if Path(args.registry).exists() and not args.force:
            return _fail(f"{args.registry} exists (use --force to overwrite)")
        reg = PayloadRegistry(args.payload_length, args.version_bits, args.redundancy, args.d_min)
        reg.save(args.registry)
        print(f"created registry {args.registry} (message bits {reg.message_bits}, "
              f"d_min {reg.d_min})")
    elif args.action == "assign":
        reg = _open_registry(args.registry)
        code = reg.assign_code(args.customer_id, args.version)
        reg.save(args.registry)
        print(f"{args.customer_id} {args.version} {code.to_string()}")
    else:
        reg = _open_registry(args.registry, create=False)
        for e in reg.entries():
            print(f"{e.customer_id} {e.version} {e.code.to_string()}")
        print(f"sha256={reg.content_hash}", file=sys.stderr)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    verifier = _verifier(args)
    server = serve(verifier, args.host, args.port, qps_limit=args.qps_limit,
                   redact=args.redact_logits, max_bytes=args.max_bytes)

    def reload(*_):
        # SIGHUP: rebuild the snapshot from disk and swap it in atomically
        try:
            verifier.swap(_verifier(args).snapshot)
            logging.info("reloaded calibration %s", verifier.snapshot.calibration.content_hash)
        except Exception as e:  # keep serving the old snapshot
            logging.error("reload failed: %s", e)

    if hasattr(signal, "SIGHUP"):
        signal.signal(signal.SIGHUP, reload)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="provmark", description="Invisible image watermarking toolkit.")
    p.add_argument("--version", action="version", version=f"provmark {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("keygen", help="create a secret key file")
    k.add_argument("--out", required=True)
    k.add_argument("--key-id", default="default")
    k.add_argument("--force", action="store_true")
    k.set_defaults(func=cmd_keygen)

    e = sub.add_parser("embed", help="watermark an image")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--key-file")
    e.add_argument("--customer-id", type=int, required=True)
    e.add_argument("--version", type=int, default=0)
    e.add_argument("--registry")
    e.add_argument("--jpeg-quality", type=int, default=95)
    e.set_defaults(func=cmd_embed, needs=("key_file",), wants=("registry",))

    d = sub.add_parser("detect", help="verify an image")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--key-file")
    d.add_argument("--calibration")
    d.add_argument("--registry")
    d.add_argument("--alpha", type=float, default=0.01)
    d.add_argument("--redact-logits", action="store_true")
    d.set_defaults(func=cmd_detect, needs=("key_file", "calibration"), wants=("registry",))

    c = sub.add_parser("calibrate", help="build a calibration file from a dataset")
    c.add_argument("--dataset", required=True)
    c.add_argument("--key-file")
    c.add_argument("--out", required=True)
    c.add_argument("--max-images", type=int)
    c.add_argument("--mode", choices=("worst", "random"), default="worst")
    c.add_argument("--transforms", help="comma separated ids (default: all but combined rotate)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--quiet", action="store_true")
    c.set_defaults(func=cmd_calibrate, needs=("key_file",))

    b = sub.add_parser("benchmark", help="run the robustness benchmark")
    b.add_argument("--dataset", required=True)
    b.add_argument("--out")
    b.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    b.add_argument("--max-images", type=int)
    b.add_argument("--resolution", choices=("fixed", "native-image", "native-model"),
                   default="fixed")
    b.add_argument("--target-fpr", type=float, default=0.001)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--modes", default="random,worst")
    b.add_argument("--transforms")
    b.add_argument("--key-file", help="default: a key derived from --seed")
    b.add_argument("--registry")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(func=cmd_benchmark)

    cp = sub.add_parser("corpus", help="write a synthetic photo corpus")
    cp.add_argument("--out", required=True)
    cp.add_argument("--n", type=int, default=200)
    cp.add_argument("--size", type=int, default=512)
    cp.add_argument("--seed", type=int, default=0)
    cp.set_defaults(func=cmd_corpus)

    r = sub.add_parser("registry", help="manage the payload registry")
    r.add_argument("action", choices=("init", "assign", "show"))
    r.add_argument("--registry")
    r.add_argument("--customer-id", type=int)
    r.add_argument("--version", type=int, default=0)
    r.add_argument("--payload-length", type=int, default=64)
    r.add_argument("--version-bits", type=int, default=4)
    r.add_argument("--redundancy", type=int, default=2)
    r.add_argument("--d-min", type=int)
    r.add_argument("--force", action="store_true")
    r.set_defaults(func=cmd_registry, needs=("registry",))

    s = sub.add_parser("serve", help="run the verification endpoint")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--key-file")
    s.add_argument("--calibration")
    s.add_argument("--registry")
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--qps-limit", type=float, default=5.0)
    s.add_argument("--max-bytes", type=int, default=32 * 1024 * 1024)
    s.add_argument("--redact-logits", action=argparse.BooleanOptionalAction, default=True)
    s.set_defaults(func=cmd_serve, needs=("key_file", "calibration"), wants=("registry",))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in getattr(args, "needs", ()):
        _env_default(args, name, True, parser)
    for name in getattr(args, "wants", ()):
        _env_default(args, name, False, parser)
    if args.command == "registry" and args.action == "assign" and args.customer_id is None:
        parser.error("registry assign needs --customer-id")
    from .errors import ProvmarkError

    try:
        return args.func(args)
    except (ProvmarkError, OSError, ValueError, KeyError) as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
