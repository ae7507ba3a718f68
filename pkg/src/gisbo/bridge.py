"""Client for external in-context surrogates over a child-process pipe.

One request line of UTF-8 JSON goes to the server's stdin, one response
line comes back on its stdout; ids must match and only one request is ever
in flight. Floats are serialized with 17 significant digits so decoded
values are bit-identical to encoded ones. The normative wire format lives
in docs/protocol.md; `serve_echo` implements the reference stub used by the
conformance tests.
"""
from __future__ import annotations

import json
import queue
import subprocess
import sys
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ObservationSet, PosteriorBatch
from .errors import (InvalidArgument, InvalidHandle, PreconditionViolation,
                     ProtocolError, RemoteError, SpawnError)
from .surrogate import SurrogateContract, finite_difference_mean_grad

PROTOCOL_VERSION = "1"
HANDSHAKE_TIMEOUT_S = 30.0
INFER_TIMEOUT_S = 600.0
SHUTDOWN_GRACE_S = 5.0

_EOF = object()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _vec(v) -> str:
    return "[" + ",".join(_fmt(x) for x in v) + "]"


def _mat(M) -> str:
    return "[" + ",".join(_vec(row) for row in M) + "]"


@dataclass
class BridgeHandle:
    """Single-owner handle to a running bridge server process."""

    process: subprocess.Popen
    version: str = ""
    max_context_size: int = 0
    infer_timeout_s: float = INFER_TIMEOUT_S
    _next_id: int = 0
    _closed: bool = False
    _lines: queue.Queue = field(default_factory=queue.Queue)
    _reader: threading.Thread | None = None

    def _take_id(self) -> int:
        rid = self._next_id
        self._next_id += 1
        return rid


def _start_reader(handle: BridgeHandle) -> None:
    def pump():
        try:
            for line in handle.process.stdout:
                handle._lines.put(line)
        except ValueError:
            pass  # stdout closed under us during shutdown
        handle._lines.put(_EOF)

    t = threading.Thread(target=pump, daemon=True)
    t.start()
    handle._reader = t


def _send_line(handle: BridgeHandle, line: str) -> None:
    try:
        handle.process.stdin.write(line + "\n")
        handle.process.stdin.flush()
    except (BrokenPipeError, OSError) as exc:
        raise ProtocolError(f"broken pipe while writing to server: {exc}") from exc


def _read_response(handle: BridgeHandle, rid: int, timeout: float) -> dict:
    try:
        line = handle._lines.get(timeout=timeout)
    except queue.Empty:
        raise ProtocolError(f"no response to request {rid} within {timeout:g} s")
    if line is _EOF:
        raise ProtocolError("server closed the pipe (broken pipe) before responding")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed response line: {line!r}") from exc
    if not isinstance(obj, dict) or "id" not in obj or "ok" not in obj:
        raise ProtocolError(f"response missing id/ok fields: {obj!r}")
    if obj["id"] != rid:
        raise ProtocolError(f"response id {obj['id']} does not match request id {rid}")
    return obj


def spawn(command, handshake_timeout_s: float = HANDSHAKE_TIMEOUT_S,
          infer_timeout_s: float = INFER_TIMEOUT_S) -> BridgeHandle:
    """Launch a bridge server and complete the ping handshake."""
    cmd = list(command)
    if not cmd:
        raise InvalidArgument("empty bridge command")
    try:
        proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8", bufsize=1,
        )
    except (FileNotFoundError, PermissionError, NotADirectoryError, OSError) as exc:
        raise SpawnError(f"could not launch bridge server {cmd!r}: {exc}") from exc

    handle = BridgeHandle(process=proc, infer_timeout_s=infer_timeout_s)
    _start_reader(handle)
    rid = handle._take_id()
    try:
        _send_line(handle, json.dumps({"id": rid, "op": "ping"}))
        resp = _read_response(handle, rid, handshake_timeout_s)
    except ProtocolError:
        _kill(handle)
        raise
    if not resp.get("ok"):
        _kill(handle)
        raise ProtocolError(f"handshake refused: {resp.get('error')!r}")
    version = resp.get("version")
    cap = resp.get("max_context_size")
    if not isinstance(version, str) or not isinstance(cap, int) or cap < 1:
        _kill(handle)
        raise ProtocolError(f"handshake payload malformed: {resp!r}")
    handle.version = version
    handle.max_context_size = cap
    return handle


def infer(handle: BridgeHandle, obs: ObservationSet, X_cand,
          need_grad: bool = False) -> PosteriorBatch:
    """One in-context inference round trip."""
    if handle._closed:
        raise InvalidHandle("infer on a handle that was shut down")
    Xc = np.asarray(X_cand, dtype=float)
    if Xc.ndim != 2 or Xc.shape[1] != obs.dim:
        raise InvalidArgument(f"X_cand shape {Xc.shape} incompatible with dim {obs.dim}")
    m = Xc.shape[0]
    if obs.n + m > handle.max_context_size:
        raise PreconditionViolation(
            f"context {obs.n} + candidates {m} exceeds max_context_size "
            f"{handle.max_context_size}; nothing was sent")
    rid = handle._take_id()
    line = (f'{{"id":{rid},"op":"infer","x_obs":{_mat(obs.X)},"y_obs":{_vec(obs.y)},'
            f'"x_cand":{_mat(Xc)},"need_grad":{"true" if need_grad else "false"}}}')
    _send_line(handle, line)
    resp = _read_response(handle, rid, handle.infer_timeout_s)
    if not resp.get("ok"):
        raise RemoteError(str(resp.get("error", "server reported failure")))

    try:
        mean = np.asarray(resp["mean"], dtype=float)
        var = np.asarray(resp["var"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"infer response missing mean/var arrays: {resp!r}") from exc
    if mean.shape != (m,) or var.shape != (m,):
        raise ProtocolError(
            f"mean/var length {mean.shape}/{var.shape} does not match m={m}")
    if not (np.isfinite(mean).all() and np.isfinite(var).all()) or (var < 0).any():
        raise ProtocolError("mean/var must be finite with nonnegative variances")
    grad = None
    if need_grad and "grad" in resp and resp["grad"] is not None:
        grad = np.asarray(resp["grad"], dtype=float)
        if grad.shape != (m, obs.dim):
            raise ProtocolError(f"grad shape {grad.shape} != ({m}, {obs.dim})")
        if not np.isfinite(grad).all():
            raise ProtocolError("grad must be finite")
    return PosteriorBatch(mean, var, grad)


def _kill(handle: BridgeHandle) -> None:
    handle._closed = True
    try:
        handle.process.kill()
        handle.process.wait(timeout=SHUTDOWN_GRACE_S)
    except Exception:
        pass


def shutdown(handle: BridgeHandle) -> None:
    """Best-effort orderly stop; idempotent and safe after a server crash."""
    if handle._closed:
        return
    handle._closed = True
    try:
        _send_line(handle, json.dumps({"id": handle._take_id(), "op": "shutdown"}))
    except ProtocolError:
        pass
    try:
        handle.process.wait(timeout=SHUTDOWN_GRACE_S)
    except subprocess.TimeoutExpired:
        handle.process.kill()
        try:
            handle.process.wait(timeout=SHUTDOWN_GRACE_S)
        except subprocess.TimeoutExpired:
            pass
    try:
        handle.process.stdin.close()
    except Exception:
        pass


@dataclass
class BridgeSurrogate:
    """Engine-facing adapter over a bridge handle.

    If the server answers a need_grad request without gradient rows, the
    engine falls back to central finite differences of the served mean.
    """

    handle: BridgeHandle
    fd_step: float = 1e-5
    contract: SurrogateContract = None
    _obs: ObservationSet | None = None

    def __post_init__(self):
        if self.contract is None:
            self.contract = SurrogateContract(
                identity=f"bridge-v{self.handle.version}",
                analytic_grad=True,  # optimistic; corrected per response
                max_context_size=self.handle.max_context_size,
            )

    def condition(self, obs: ObservationSet, fresh: bool = False) -> None:
        self._obs = obs

    def posterior(self, X, need_grad: bool = False) -> PosteriorBatch:
        if self._obs is None:
            raise InvalidArgument("surrogate must be conditioned before posterior queries")
        post = infer(self.handle, self._obs, X, need_grad=need_grad)
        if need_grad and post.grad is None:
            grad = finite_difference_mean_grad(
                lambda Xq: infer(self.handle, self._obs, Xq, need_grad=False),
                X, h=self.fd_step)
            post = replace(post, grad=grad)
        return post

    def close(self) -> None:
        shutdown(self.handle)


# --- reference echo server ---------------------------------------------------

def serve_echo(stdin=None, stdout=None, max_context_size: int = 10000) -> int:
    """Protocol test stub: mean = mean(y_obs), var = 1, grad = 0.

    Speaks the full wire protocol including the context-size cap, so the
    client conformance suite can run without any model dependency.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def reply(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            rid = req["id"]
            op = req["op"]
        except (json.JSONDecodeError, KeyError, TypeError):
            reply({"id": -1, "ok": False, "error": "malformed request"})
            continue
        if op == "ping":
            reply({"id": rid, "ok": True, "version": PROTOCOL_VERSION,
                   "max_context_size": max_context_size})
        elif op == "shutdown":
            reply({"id": rid, "ok": True})
            return 0
        elif op == "infer":
            try:
                y = np.asarray(req["y_obs"], dtype=float)
                x_obs = np.asarray(req["x_obs"], dtype=float)
                x_cand = np.asarray(req["x_cand"], dtype=float)
                need_grad = bool(req.get("need_grad", False))
            except (KeyError, TypeError, ValueError):
                reply({"id": rid, "ok": False, "error": "malformed infer payload"})
                continue
            n, m = x_obs.shape[0], x_cand.shape[0]
            if n + m > max_context_size:
                reply({"id": rid, "ok": False,
                       "error": f"context {n} + candidates {m} exceeds cap {max_context_size}"})
                continue
            out = {"id": rid, "ok": True,
                   "mean": [float(np.mean(y))] * m, "var": [1.0] * m}
            if need_grad:
                out["grad"] = [[0.0] * x_cand.shape[1]] * m
            reply(out)
        else:
            reply({"id": rid, "ok": False, "error": f"unknown op {op!r}"})
    return 0
