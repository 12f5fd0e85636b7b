"""Verification core shared by the CLI and the HTTP endpoint.

``Verifier.verify`` is the one code path that turns an image into a verdict
document.  The HTTP server wraps it with per-client token buckets, a body
size cap and optional score redaction.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import __version__
from .codec import CodecConfig, SecretKey, decode_logits
from .decision import CalibrationSet, Verdict, decide, match_payloads
from .errors import MalformedFile, UnsupportedFormat
from .imaging import RgbImage, load_image
from .metrics import bit_accuracy
from .payload import PayloadRegistry

log = logging.getLogger("provmark.service")

DEFAULT_MAX_BYTES = 32 * 1024 * 1024


@dataclass(frozen=True)
class Snapshot:
    """Immutable verification state; replaced wholesale on reload."""

    key: SecretKey
    calibration: CalibrationSet
    registry: PayloadRegistry | None = None
    config: CodecConfig = CodecConfig()
    alpha: float = 0.01


class Verifier:
    def __init__(self, snapshot: Snapshot):
        self._snapshot = snapshot
        self._lock = threading.Lock()

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def swap(self, snapshot: Snapshot) -> None:
        """Atomic replacement; in-flight requests keep their old snapshot."""
        with self._lock:
            self._snapshot = snapshot

    def verify(self, img: RgbImage, include_logits: bool = True) -> dict:
        snap = self._snapshot
        res = decode_logits(img, snap.key, snap.config)
        d = decide(res.detection_logit, snap.calibration, snap.alpha)
        verdict = d.verdict
        out = {"verdict": verdict.value, "rho0": d.rho0, "rho1": d.rho1, "alpha": d.alpha,
               "matched_payload": None, "accepted_count": 0}
        reg = snap.registry
        if reg is not None and len(reg) and snap.calibration.per_bit is not None:
            m = match_payloads(res.bit_logits, reg, snap.calibration, snap.alpha)
            out["accepted_count"] = m.accepted_count
            if verdict is Verdict.WATERMARKED:
                if m.status == "matched":
                    entry = reg.get(m.entry)
                    out["matched_payload"] = m.entry
                    out["version"] = entry.version
                    out["bit_accuracy_vs_matched"] = bit_accuracy(res.bit_logits, entry.code)
                elif m.status == "abstain":
                    verdict = Verdict.ABSTAIN  # several payloads fit: refuse to attribute
                    out["verdict"] = verdict.value
        if include_logits:
            out["detection_logit"] = res.detection_logit
            out["bit_logits"] = [round(float(v), 6) for v in res.bit_logits]
            out["alignment"] = res.alignment.label
        return out

    def health(self) -> dict:
        snap = self._snapshot
        return {
            "status": "ok",
            "version": __version__,
            "key_id": snap.key.key_id,
            "calibration_sha256": snap.calibration.content_hash,
            "registry_sha256": snap.registry.content_hash if snap.registry else None,
        }


class TokenBucket:
    """Per-client buckets of ``rate`` tokens per second, burst ``rate``."""

    def __init__(self, rate: float, burst: float | None = None, clock=time.monotonic):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.burst = float(burst if burst is not None else max(rate, 1.0))
        self.clock = clock
        self._state: dict[str, tuple[float, float]] = {}
        self._lock = threading.Lock()

    def allow(self, client: str) -> bool:
        now = self.clock()
        with self._lock:
            tokens, last = self._state.get(client, (self.burst, now))
            tokens = min(self.burst, tokens + (now - last) * self.rate)
            ok = tokens >= 1.0
            self._state[client] = (tokens - 1.0 if ok else tokens, now)
        return ok


class _Handler(BaseHTTPRequestHandler):
    server: "VerifyServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.info("%s " + fmt, self.client_address[0], *args)

    def _send(self, status: int, body: dict) -> None:
        data = (json.dumps(body, sort_keys=True) + "\n").encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: HTTPStatus, message: str) -> None:
        self._send(status, {"error": message, "status": int(status)})

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(HTTPStatus.OK, self.server.verifier.health())
        else:
            self._error(HTTPStatus.NOT_FOUND, "not found")

    def do_POST(self):
        if self.path != "/v1/verify":
            self._error(HTTPStatus.NOT_FOUND, "not found")
            return
        if not self.server.limiter.allow(self.client_address[0]):
            self.close_connection = True
            self._error(HTTPStatus.TOO_MANY_REQUESTS, "rate limit exceeded")
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self.close_connection = True
            self._error(HTTPStatus.BAD_REQUEST, "Content-Length required")
            return
        if length > self.server.max_bytes:
            self.close_connection = True  # body left unread
            self._error(HTTPStatus.REQUEST_ENTITY_TOO_LARGE,
                        f"body exceeds {self.server.max_bytes} bytes")
            return
        body = self.rfile.read(length)
        try:
            img = load_image(body)
        except (MalformedFile, UnsupportedFormat) as e:
            self._error(HTTPStatus.BAD_REQUEST, f"undecodable image: {e}")
            return
        try:
            result = self.server.verifier.verify(img, include_logits=not self.server.redact)
        except ValueError as e:  # e.g. image below the minimum size
            self._error(HTTPStatus.BAD_REQUEST, str(e))
            return
        self._send(HTTPStatus.OK, result)


class VerifyServer(ThreadingHTTPServer):
    daemon_threads = True
    # the socketserver default of 5 drops connection bursts into SYN retries
    request_queue_size = 128

    def __init__(self, address, verifier: Verifier, qps_limit: float = 5.0,
                 redact: bool = True, max_bytes: int = DEFAULT_MAX_BYTES):
        super().__init__(address, _Handler)
        self.verifier = verifier
        self.limiter = TokenBucket(qps_limit)
        self.redact = redact
        self.max_bytes = max_bytes


def serve(verifier: Verifier, host: str = "127.0.0.1", port: int = 8080, **kw) -> VerifyServer:
    """Bind a server; call ``serve_forever`` on the result."""
    return VerifyServer((host, port), verifier, **kw)
