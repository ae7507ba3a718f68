"""Request loop for the bridge wire protocol.

One UTF-8 JSON object per line on stdin, one per line on stdout. Requests:

    {"id": u64, "op": "ping"}
    {"id": u64, "op": "infer", "x_obs": [[..]], "y_obs": [..],
     "x_cand": [[..]], "need_grad": bool}
    {"id": u64, "op": "shutdown"}

Responses carry the request id and "ok". Floats are emitted with 17
significant digits so decoded values are bit-identical to encoded ones.
The loop is single-threaded: the protocol allows one in-flight request.
"""
from __future__ import annotations

import json
import sys

import numpy as np

from .model import InferenceResult

PROTOCOL_VERSION = "1"
DEFAULT_MAX_CONTEXT = 10000


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _vec(v) -> str:
    return "[" + ",".join(_fmt(x) for x in v) + "]"


def _mat(M) -> str:
    return "[" + ",".join(_vec(row) for row in M) + "]"


def _ok_line(rid, payload: str = "") -> str:
    return f'{{"id":{json.dumps(rid)},"ok":true{payload}}}'


def _err_line(rid, message: str) -> str:
    return f'{{"id":{json.dumps(rid)},"ok":false,"error":{json.dumps(message)}}}'


def _parse_infer(req: dict, max_context: int):
    x_obs = np.asarray(req["x_obs"], dtype=float)
    y_obs = np.asarray(req["y_obs"], dtype=float)
    x_cand = np.asarray(req["x_cand"], dtype=float)
    need_grad = bool(req.get("need_grad", False))
    if x_obs.ndim != 2 or x_obs.shape[0] < 1:
        raise ValueError("x_obs must be a nonempty (n, D) matrix")
    if y_obs.shape != (x_obs.shape[0],):
        raise ValueError("y_obs length must match x_obs rows")
    if x_cand.ndim != 2 or x_cand.shape[1] != x_obs.shape[1]:
        raise ValueError("x_cand must be (m, D) with the x_obs dimension")
    if not (np.isfinite(x_obs).all() and np.isfinite(y_obs).all()
            and np.isfinite(x_cand).all()):
        raise ValueError("inputs must be finite")
    n, m = x_obs.shape[0], x_cand.shape[0]
    if n + m > max_context:
        raise ValueError(
            f"context {n} + candidates {m} exceeds max_context_size {max_context}")
    return x_obs, y_obs, x_cand, need_grad


def _render(rid, result: InferenceResult, need_grad: bool) -> str:
    if not (np.isfinite(result.mean).all() and np.isfinite(result.var).all()):
        return _err_line(rid, "nonfinite")
    payload = f',"mean":{_vec(result.mean)},"var":{_vec(result.var)}'
    if need_grad and result.grad is not None:
        if not np.isfinite(result.grad).all():
            return _err_line(rid, "nonfinite")
        payload += f',"grad":{_mat(result.grad)}'
    return _ok_line(rid, payload)


def serve(backend, max_context: int = DEFAULT_MAX_CONTEXT,
          stdin=None, stdout=None) -> int:
    """Serve until a shutdown request or EOF; returns the exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(line: str) -> None:
        stdout.write(line + "\n")
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
            emit(_err_line(-1, "malformed request"))
            continue
        if op == "ping":
            emit(_ok_line(rid, f',"version":"{PROTOCOL_VERSION}"'
                               f',"max_context_size":{max_context}'))
        elif op == "shutdown":
            emit(_ok_line(rid))
            return 0
        elif op == "infer":
            try:
                x_obs, y_obs, x_cand, need_grad = _parse_infer(req, max_context)
            except (KeyError, TypeError, ValueError) as exc:
                emit(_err_line(rid, str(exc)))
                continue
            try:
                result = backend.infer(x_obs, y_obs, x_cand, need_grad)
            except Exception as exc:  # a request must never kill the loop
                emit(_err_line(rid, f"inference failed: {exc}"))
                continue
            emit(_render(rid, result, need_grad))
        else:
            emit(_err_line(rid, f"unknown op {op!r}"))
    return 0
