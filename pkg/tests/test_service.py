import http.client
import json
import threading

import pytest

from provmark.codec import SecretKey
from provmark.imaging import save_image
from provmark.service import Snapshot, TokenBucket, Verifier, serve


def _png(img) -> bytes:
    return save_image(img, "PNG")


@pytest.fixture
def server(key, calibration):
    verifier = Verifier(Snapshot(key, calibration))
    srv = serve(verifier, "127.0.0.1", 0, qps_limit=5, max_bytes=4 * 1024 * 1024)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def request(srv, method, path, body=None, headers=None):
    conn = http.client.HTTPConnection(*srv.server_address[:2], timeout=60)
    try:
        conn.request(method, path, body=body, headers=headers or {})
        r = conn.getresponse()
        return r.status, json.loads(r.read() or b"{}")
    finally:
        conn.close()


def test_token_bucket_with_fake_clock():
    now = [0.0]
    tb = TokenBucket(5, clock=lambda: now[0])
    assert [tb.allow("a") for _ in range(6)] == [True] * 5 + [False]
    assert tb.allow("b")
    now[0] += 0.2  # one token back
    assert tb.allow("a") and not tb.allow("a")
    now[0] += 10.0  # refill caps at the burst size
    assert [tb.allow("a") for _ in range(6)] == [True] * 5 + [False]
    with pytest.raises(ValueError):
        TokenBucket(0)


def test_health_reports_calibration_hash(server, calibration_file):
    from provmark.decision import CalibrationSet

    status, body = request(server, "GET", "/v1/health")
    assert status == 200 and body["status"] == "ok"
    assert body["calibration_sha256"] == CalibrationSet.load(calibration_file).content_hash
    assert "key" not in body


def test_verify_marked_image(server, marked):
    status, body = request(server, "POST", "/v1/verify", _png(marked))
    assert status == 200 and body["verdict"] == "watermarked"
    assert "bit_logits" not in body  # redacted by default


def test_bad_requests(server, photo):
    assert request(server, "POST", "/v1/verify", b"not an image")[0] == 400
    assert request(server, "GET", "/v1/nothing")[0] == 404
    # only the header: the server answers before reading any body
    conn = http.client.HTTPConnection(*server.server_address[:2], timeout=60)
    conn.putrequest("POST", "/v1/verify")
    conn.putheader("Content-Length", str(4 * 1024 * 1024 + 1))
    conn.endheaders()
    r = conn.getresponse()
    assert r.status == 413 and json.loads(r.read())["status"] == 413
    conn.close()


def test_rate_limit_under_concurrency(server, photo):
    body = _png(photo)
    statuses = []
    lock = threading.Lock()
    barrier = threading.Barrier(10)

    def hit():
        barrier.wait()
        s, _ = request(server, "POST", "/v1/verify", body)
        with lock:
            statuses.append(s)

    threads = [threading.Thread(target=hit) for _ in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert statuses.count(429) >= 5
    assert set(statuses) <= {200, 429}


def test_snapshot_swap_changes_key(server, key, calibration):
    other = SecretKey.generate("rotated")
    server.verifier.swap(Snapshot(other, calibration))
    status, body = request(server, "GET", "/v1/health")
    assert body["key_id"] == "rotated"
