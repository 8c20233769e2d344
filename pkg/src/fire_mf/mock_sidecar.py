"""Reference sidecar speaking the wire protocol over stdio.

Serves a deliberately simple probabilistic model (global Gaussian or
k-nearest-neighbor) so the protocol path can be exercised end to end
without any external model runtime. Fault-injection flags let tests drive
the client's error handling.

Run as: python -m fire_mf.mock_sidecar [--model global|knn|constant] ...
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from statistics import NormalDist


class _Model:
    def __init__(self, kind: str, k: int):
        self.kind = kind
        self.k = k
        self.X: list[list[float]] | None = None
        self.y: list[float] | None = None

    def fit(self, X: list[list[float]], y: list[float]) -> None:
        if len(X) != len(y) or not y:
            raise ValueError("x and y must be equal-length and nonempty")
        self.X, self.y = X, y

    def _moments(self, xq: list[float]) -> tuple[float, float]:
        if self.kind == "constant":
            return 0.0, 1.0
        assert self.X is not None and self.y is not None
        if self.kind == "global":
            n = len(self.y)
            mean = sum(self.y) / n
            var = sum((v - mean) ** 2 for v in self.y) / n
            return mean, max(var, 1e-12)
        # knn: average of the k nearest targets, spread of that neighborhood
        dists = sorted(
            (sum((a - b) ** 2 for a, b in zip(row, xq)), v)
            for row, v in zip(self.X, self.y)
        )
        k = min(self.k, len(dists))
        vals = [v for _, v in dists[:k]]
        mean = sum(vals) / k
        var = sum((v - mean) ** 2 for v in vals) / k if k > 1 else 1.0
        return mean, max(var, 1e-12)

    def predict(
        self, Xq: list[list[float]], levels: list[float]
    ) -> tuple[list[float], list[float], list[list[float]]]:
        if self.kind != "constant" and self.X is None:
            raise ValueError("predict before fit")
        zs = [NormalDist().inv_cdf(t) for t in levels]
        means, variances, quantiles = [], [], []
        for xq in Xq:
            m, v = self._moments(xq)
            sd = math.sqrt(v)
            means.append(m)
            variances.append(v)
            quantiles.append([m + sd * z for z in zs])
        return means, variances, quantiles


def serve(args: argparse.Namespace) -> int:
    model = _Model(args.model, args.knn_k)
    fitted = args.model == "constant"
    responses = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            _emit({"id": None, "ok": False, "error": "malformed request line"})
            continue
        req_id = req.get("id")
        op = req.get("op")

        if args.hang_after is not None and responses >= args.hang_after:
            time.sleep(args.hang_seconds)
        if args.exit_after is not None and responses >= args.exit_after:
            return 3

        if op == "shutdown":
            _emit({"id": req_id, "ok": True})
            return 0
        if args.fail_op == op:
            _emit({"id": req_id, "ok": False, "error": f"injected failure for op {op!r}"})
            responses += 1
            continue
        if args.malform_after is not None and responses >= args.malform_after:
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            responses += 1
            continue

        try:
            if op == "fit":
                model.fit(req["x"], req["y"])
                fitted = True
                _emit({"id": req_id, "ok": True})
            elif op == "predict":
                if not fitted:
                    raise ValueError("predict before fit")
                mean, var, q = model.predict(req["x"], req.get("quantiles", []))
                _emit({"id": req_id, "ok": True, "mean": mean, "variance": var, "quantiles": q})
            else:
                raise ValueError(f"unknown op {op!r}")
        except Exception as exc:
            _emit({"id": req_id, "ok": False, "error": str(exc)})
        responses += 1
    return 0


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", choices=("global", "knn", "constant"), default="knn")
    parser.add_argument("--knn-k", type=int, default=5)
    parser.add_argument("--fail-op", default=None, help="answer ok=false for this op")
    parser.add_argument("--malform-after", type=int, default=None,
                        help="emit a non-JSON line after N responses")
    parser.add_argument("--hang-after", type=int, default=None,
                        help="stall after N responses")
    parser.add_argument("--hang-seconds", type=float, default=3600.0)
    parser.add_argument("--exit-after", type=int, default=None,
                        help="exit with code 3 after N responses")
    args = parser.parse_args(argv)
    return serve(args)


if __name__ == "__main__":
    sys.exit(main())
