"""Newline-delimited JSON protocol client for out-of-process surrogates.

Framing: one UTF-8 JSON object per line, no pretty-printing. Requests carry
`{"id", "op": "fit"|"predict"|"shutdown", ...}`; responses echo the id and
report `ok` plus either arrays or an error string. The first fit round-trip
doubles as the liveness handshake. The client repairs quantile crossings and
clamps negative variances on every response; everything else it distrusts
loudly with typed errors.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from fire_mf.core import (
    PredictiveSummary,
    QuantileLevels,
    enforce_quantile_monotonicity,
)

DEFAULT_TIMEOUT_SECONDS = 300.0
SIDECAR_ENV_VAR = "FIRE_MF_SIDECAR"


class SidecarError(RuntimeError):
    """Base class for failures talking to an external surrogate."""


class SidecarTimeout(SidecarError):
    pass


class SidecarProtocolError(SidecarError):
    pass


class SidecarExitError(SidecarError):
    def __init__(self, returncode: int | None, detail: str = ""):
        super().__init__(f"sidecar exited with code {returncode}{': ' + detail if detail else ''}")
        self.returncode = returncode


class SidecarRequestError(SidecarError):
    """The sidecar answered ok=false."""

    def __init__(self, op: str, message: str):
        super().__init__(f"sidecar rejected op {op!r}: {message}")
        self.op = op


def _excerpt(line: str, limit: int = 120) -> str:
    return line if len(line) <= limit else line[:limit] + "..."


@dataclass
class SidecarClient:
    """Low-level request/response channel to a sidecar process."""

    command: list[str]
    timeout: float = DEFAULT_TIMEOUT_SECONDS
    _proc: subprocess.Popen | None = field(default=None, repr=False)
    _lines: "queue.Queue[str | None]" = field(default_factory=queue.Queue, repr=False)
    _next_id: int = 0

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise SidecarError(f"cannot spawn sidecar {self.command}: {exc}") from exc

        def _pump(stream, sink: "queue.Queue[str | None]"):
            for line in stream:
                sink.put(line)
            sink.put(None)

        threading.Thread(
            target=_pump, args=(self._proc.stdout, self._lines), daemon=True
        ).start()

    def request(self, op: str, **payload) -> dict:
        self.start()
        assert self._proc is not None
        req_id = self._next_id
        self._next_id += 1
        message = {"id": req_id, "op": op, **payload}
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._kill()
            raise SidecarExitError(self._returncode(), str(exc)) from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise SidecarTimeout(
                f"no response to op {op!r} within {self.timeout:.0f} s"
            ) from None
        if line is None:
            code = self._returncode()
            self._kill()
            raise SidecarExitError(code, f"stream closed during op {op!r}")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            self._kill()
            raise SidecarProtocolError(f"malformed JSON line: {_excerpt(line.rstrip())}") from None
        if not isinstance(resp, dict):
            self._kill()
            raise SidecarProtocolError(f"expected a JSON object, got: {_excerpt(line.rstrip())}")
        if resp.get("id") != req_id:
            self._kill()
            raise SidecarProtocolError(
                f"response id {resp.get('id')!r} does not echo request id {req_id}"
            )
        if not resp.get("ok", False):
            raise SidecarRequestError(op, str(resp.get("error", "unspecified error")))
        return resp

    def _returncode(self) -> int | None:
        if self._proc is None:
            return None
        self._proc.poll()
        return self._proc.returncode

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()

    def close(self) -> None:
        if self._proc is None:
            return
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(json.dumps({"id": self._next_id, "op": "shutdown"}) + "\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=5.0)
            except (OSError, subprocess.TimeoutExpired):
                self._kill()
        self._proc = None

    def __enter__(self) -> "SidecarClient":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def _as_float_array(resp: dict, key: str, n: int) -> np.ndarray:
    value = resp.get(key)
    arr = np.asarray(value, dtype=float) if value is not None else None
    if arr is None or arr.shape != (n,):
        raise SidecarProtocolError(
            f"response field {key!r} must be a length-{n} array, got {value!r:.80s}"
        )
    if not np.isfinite(arr).all():
        raise SidecarProtocolError(f"response field {key!r} contains non-finite values")
    return arr


@dataclass
class ExternalSurrogate:
    """Surrogate-contract adapter speaking the wire protocol to a sidecar."""

    client: SidecarClient
    _fitted: bool = False

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ExternalSurrogate":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        self.client.request("fit", x=X.tolist(), y=y.tolist())
        self._fitted = True
        return self

    def predict(self, X: np.ndarray, levels: QuantileLevels = QuantileLevels()) -> PredictiveSummary:
        if not self._fitted:
            raise RuntimeError("predict called before fit")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        resp = self.client.request("predict", x=X.tolist(), quantiles=list(levels.levels))
        mean = _as_float_array(resp, "mean", n)
        variance = np.clip(_as_float_array(resp, "variance", n), 0.0, None)
        q = np.asarray(resp.get("quantiles"), dtype=float)
        if q.shape != (n, len(levels)):
            raise SidecarProtocolError(
                f"quantiles must have shape {(n, len(levels))}, got {q.shape}"
            )
        if not np.isfinite(q).all():
            raise SidecarProtocolError("quantiles contain non-finite values")
        q = enforce_quantile_monotonicity(q)
        return PredictiveSummary(mean=mean, variance=variance, quantiles=q, levels=levels)

    def close(self) -> None:
        self.client.close()


def external_surrogate_client(
    command: str | list[str] | None = None, timeout: float = DEFAULT_TIMEOUT_SECONDS
) -> ExternalSurrogate:
    """Build an external surrogate from a sidecar command line.

    Falls back to the FIRE_MF_SIDECAR environment variable when no command
    is given.
    """
    if command is None:
        command = os.environ.get(SIDECAR_ENV_VAR)
        if not command:
            raise SidecarError(
                f"no sidecar command given and {SIDECAR_ENV_VAR} is not set"
            )
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    return ExternalSurrogate(client=SidecarClient(command=argv, timeout=timeout))
