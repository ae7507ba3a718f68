"""Wire-protocol conformance, speaking raw JSON lines over the pipes."""
import json
import subprocess
import sys

import numpy as np
import pytest

SERVER = [sys.executable, "-m", "tfm_server"]


class Client:
    def __init__(self, extra_args=()):
        self.proc = subprocess.Popen(SERVER + list(extra_args),
                                     stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     text=True, bufsize=1)
        self._next = 0

    def send_raw(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def rpc(self, op: str, **fields) -> dict:
        rid = self._next
        self._next += 1
        return self.send_raw(json.dumps({"id": rid, "op": op, **fields}))

    def infer(self, X, y, Xc, need_grad=False) -> dict:
        return self.rpc("infer", x_obs=np.asarray(X).tolist(),
                        y_obs=np.asarray(y).tolist(),
                        x_cand=np.asarray(Xc).tolist(), need_grad=need_grad)

    def close(self) -> int:
        try:
            self.rpc("shutdown")
        except Exception:
            self.proc.kill()
        return self.proc.wait(timeout=10)


@pytest.fixture
def client():
    c = Client()
    yield c
    c.close()


def dataset(n=20, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim))
    return X, X.sum(axis=1)


def test_ping_handshake(client):
    resp = client.rpc("ping")
    assert resp == {"id": 0, "ok": True, "version": "1", "max_context_size": 10000}


def test_infer_shape_contract(client):
    X, y = dataset()
    resp = client.infer(X, y, X[:5], need_grad=True)
    assert resp["ok"] is True
    assert len(resp["mean"]) == 5 and len(resp["var"]) == 5
    assert len(resp["grad"]) == 5 and len(resp["grad"][0]) == 3
    no_grad = client.infer(X, y, X[:2], need_grad=False)
    assert "grad" not in no_grad


def test_context_cap_rejection():
    c = Client(["--max-context-size", "25"])
    try:
        X, y = dataset(n=20)
        refused = c.infer(X, y, X[:6])  # 20 + 6 > 25
        assert refused["ok"] is False and "max_context_size" in refused["error"]
        accepted = c.infer(X, y, X[:5])  # exactly at the cap
        assert accepted["ok"] is True
    finally:
        c.close()


def test_malformed_request_recovery(client):
    bad = client.send_raw("this is not json")
    assert bad["ok"] is False
    missing = client.send_raw(json.dumps({"id": 5}))
    assert missing["ok"] is False
    # the session keeps serving afterwards
    assert client.rpc("ping")["ok"] is True


def test_bad_payload_shapes(client):
    X, y = dataset()
    resp = client.rpc("infer", x_obs=X.tolist(), y_obs=y[:-1].tolist(),
                      x_cand=X[:2].tolist(), need_grad=False)
    assert resp["ok"] is False and "y_obs" in resp["error"]
    resp = client.rpc("infer", x_obs=X.tolist(), y_obs=y.tolist(),
                      x_cand=[[0.1, 0.2]], need_grad=False)
    assert resp["ok"] is False
    resp = client.rpc("infer", x_obs=[[1.0, 2.0, float("nan")]], y_obs=[1.0],
                      x_cand=[[0.0, 0.0, 0.0]], need_grad=False)
    assert resp["ok"] is False and "finite" in resp["error"]


def test_unknown_op(client):
    resp = client.rpc("train")
    assert resp["ok"] is False and "unknown op" in resp["error"]


def test_shutdown_clean_exit():
    c = Client()
    resp = c.rpc("shutdown")
    assert resp["ok"] is True
    assert c.proc.wait(timeout=10) == 0


def test_identical_requests_identical_responses(client):
    X, y = dataset(seed=3)
    line = json.dumps({"id": 9, "op": "infer", "x_obs": X.tolist(),
                       "y_obs": y.tolist(), "x_cand": X[:4].tolist(),
                       "need_grad": True})
    a = client.send_raw(line)
    b = client.send_raw(line)
    assert a == b


def test_float_precision_round_trip(client):
    rng = np.random.default_rng(4)
    y = rng.standard_normal(6) * 10.0 ** rng.integers(-15, 15, 6)
    X = rng.random((6, 2))
    resp = client.infer(X, y, X)
    # constant-free sanity: served floats parse to finite doubles bit-stable
    again = client.infer(X, y, X)
    assert resp["mean"] == again["mean"] and resp["var"] == again["var"]


def test_unknown_backend_exits_2_and_missing_model_exits_4():
    proc = subprocess.run(SERVER + ["--backend", "imaginary"],
                          input="", capture_output=True, text=True, timeout=60)
    assert proc.returncode == 4
    try:
        import tabpfn  # noqa: F401
    except ImportError:
        proc = subprocess.run(SERVER + ["--backend", "tabpfn"],
                              input="", capture_output=True, text=True, timeout=120)
        assert proc.returncode == 4
        assert "model load failed" in proc.stderr
