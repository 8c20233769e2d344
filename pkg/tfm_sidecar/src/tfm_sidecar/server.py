"""Serve loop: one JSON request per line on stdin, one response per line on
stdout, strictly serial.

Requests: {"id", "op": "fit"|"predict"|"shutdown", "x", "y", "quantiles"}.
Responses echo the id; `ok: false` carries an error string and the loop
continues. A model that cannot be constructed produces a single error
response and exit code 1.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from tfm_sidecar.model import ModelAdapter, ModelUnavailable


@dataclass
class SidecarState:
    adapter_factory: Callable[[], ModelAdapter]
    adapter: ModelAdapter | None = None
    fitted: bool = False
    levels: tuple[float, ...] = field(default_factory=tuple)

    def ensure_adapter(self) -> ModelAdapter:
        if self.adapter is None:
            self.adapter = self.adapter_factory()
        return self.adapter


def _validate_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"{name} must be a nonempty 2-d array")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _handle_fit(state: SidecarState, req: dict) -> dict:
    X = _validate_matrix(req.get("x"), "x")
    y = np.asarray(req.get("y"), dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("x and y row counts disagree")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")
    adapter = state.ensure_adapter()
    adapter.fit(X, y)
    state.fitted = True
    return {}


def _handle_predict(state: SidecarState, req: dict) -> dict:
    if not state.fitted:
        raise ValueError("predict before fit")
    X = _validate_matrix(req.get("x"), "x")
    levels = [float(v) for v in req.get("quantiles", [])]
    if not levels or any(not 0.0 < v < 1.0 for v in levels):
        raise ValueError("quantiles must be a nonempty list of values in (0, 1)")
    state.levels = tuple(levels)
    mean, variance, quantiles = state.ensure_adapter().summarize(X, levels)
    mean = np.asarray(mean, dtype=float).ravel()
    variance = np.clip(np.asarray(variance, dtype=float).ravel(), 0.0, None)
    quantiles = np.sort(np.asarray(quantiles, dtype=float), axis=1)  # isotonic repair
    n = X.shape[0]
    if mean.shape != (n,) or variance.shape != (n,) or quantiles.shape != (n, len(levels)):
        raise ValueError("model returned mis-shaped predictions")
    return {
        "mean": mean.tolist(),
        "variance": variance.tolist(),
        "quantiles": quantiles.tolist(),
    }


def serve(
    adapter_factory: Callable[[], ModelAdapter],
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
) -> int:
    """Process requests until shutdown or EOF; returns the exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    state = SidecarState(adapter_factory=adapter_factory)

    def emit(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            emit({"id": None, "ok": False, "error": "malformed request line"})
            continue
        req_id = req.get("id") if isinstance(req, dict) else None
        op = req.get("op") if isinstance(req, dict) else None
        if op == "shutdown":
            emit({"id": req_id, "ok": True})
            return 0
        try:
            if op == "fit":
                payload = _handle_fit(state, req)
            elif op == "predict":
                payload = _handle_predict(state, req)
            else:
                raise ValueError(f"unknown op {op!r}")
        except ModelUnavailable as exc:
            # model construction/load failures are fatal by contract
            emit({"id": req_id, "ok": False, "error": f"model unavailable: {exc}"})
            return 1
        except Exception as exc:
            emit({"id": req_id, "ok": False, "error": str(exc)})
            continue
        emit({"id": req_id, "ok": True, **payload})
    return 0
