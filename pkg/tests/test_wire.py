import json
import subprocess
import sys

import numpy as np
import pytest

from fire_mf.core import QuantileLevels
from fire_mf.testing import assert_sidecar_conformance
from fire_mf.wire import (
    SidecarClient,
    SidecarExitError,
    SidecarProtocolError,
    SidecarRequestError,
    SidecarTimeout,
    external_surrogate_client,
)

MOCK = [sys.executable, "-m", "fire_mf.mock_sidecar"]


def mock_cmd(*extra) -> list[str]:
    return MOCK + list(extra)


class TestMockSidecarConformance:
    def test_default_model_passes_suite(self):
        assert_sidecar_conformance(mock_cmd())

    def test_global_model_passes_suite(self):
        assert_sidecar_conformance(mock_cmd("--model", "global"))


class TestRoundTrip:
    def test_fit_then_predict_shapes(self):
        rng = np.random.default_rng(0)
        s = external_surrogate_client(mock_cmd(), timeout=30)
        try:
            s.fit(rng.uniform(size=(10, 2)), rng.normal(size=10))
            out = s.predict(rng.uniform(size=(3, 2)))
            assert out.mean.shape == (3,)
            assert out.quantiles.shape == (3, 9)
            assert np.all(np.diff(out.quantiles, axis=1) >= 0)
        finally:
            s.close()

    def test_constant_model_emits_unit_gaussian(self):
        s = external_surrogate_client(mock_cmd("--model", "constant"), timeout=30)
        try:
            s.fit(np.zeros((2, 1)), np.zeros(2))
            out = s.predict(np.zeros((4, 1)), QuantileLevels((0.5,)))
            np.testing.assert_array_equal(out.mean, 0.0)
            np.testing.assert_array_equal(out.variance, 1.0)
            np.testing.assert_allclose(out.quantiles[:, 0], 0.0, atol=1e-12)
        finally:
            s.close()

    def test_client_guards_predict_before_fit(self):
        s = external_surrogate_client(mock_cmd(), timeout=30)
        try:
            with pytest.raises(RuntimeError, match="before fit"):
                s.predict(np.zeros((1, 1)))
        finally:
            s.close()

    def test_server_rejects_predict_before_fit(self):
        with SidecarClient(command=mock_cmd(), timeout=30) as client:
            with pytest.raises(SidecarRequestError, match="predict"):
                client.request("predict", x=[[0.0]], quantiles=[0.5])

    def test_shutdown_is_clean(self):
        client = SidecarClient(command=mock_cmd(), timeout=30)
        client.start()
        client.request("fit", x=[[0.0]], y=[1.0])
        proc = client._proc
        client.close()
        assert proc.wait(timeout=10) == 0


class TestFaultInjection:
    def test_malformed_line_raises_protocol_error_with_excerpt(self):
        s = external_surrogate_client(mock_cmd("--malform-after", "1"), timeout=30)
        try:
            s.fit(np.zeros((3, 1)), np.arange(3.0))
            with pytest.raises(SidecarProtocolError, match="not json"):
                s.predict(np.zeros((2, 1)))
        finally:
            s.close()

    def test_timeout_raises_typed_error(self):
        s = external_surrogate_client(mock_cmd("--hang-after", "1"), timeout=30.0)
        try:
            s.fit(np.zeros((3, 1)), np.arange(3.0))
            s.client.timeout = 1.0  # short fuse for the stalled call only
            with pytest.raises(SidecarTimeout, match="within 1 s"):
                s.predict(np.zeros((2, 1)))
        finally:
            s.close()

    def test_nonzero_exit_raises_exit_error(self):
        s = external_surrogate_client(mock_cmd("--exit-after", "1"), timeout=30)
        try:
            s.fit(np.zeros((3, 1)), np.arange(3.0))
            with pytest.raises(SidecarExitError, match="code 3"):
                s.predict(np.zeros((2, 1)))
        finally:
            s.close()

    def test_injected_op_failure_surfaces_op_name(self):
        s = external_surrogate_client(mock_cmd("--fail-op", "predict"), timeout=30)
        try:
            s.fit(np.zeros((3, 1)), np.arange(3.0))
            with pytest.raises(SidecarRequestError, match="predict"):
                s.predict(np.zeros((2, 1)))
        finally:
            s.close()

    def test_unspawnable_command(self):
        from fire_mf.wire import SidecarError

        s = external_surrogate_client(["/nonexistent/sidecar"], timeout=5)
        with pytest.raises(SidecarError, match="spawn"):
            s.fit(np.zeros((1, 1)), np.zeros(1))


class TestFramixg:
    def test_responses_are_single_json_lines(self):
        proc = subprocess.Popen(
            mock_cmd(),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            requests = [
                {"id": 0, "op": "fit", "x": [[0.0], [1.0]], "y": [0.0, 1.0]},
                {"id": 1, "op": "predict", "x": [[0.5]], "quantiles": [0.1, 0.5, 0.9]},
                {"id": 2, "op": "shutdown"},
            ]
            payload = "".join(json.dumps(r) + "\n" for r in requests)
            out, _ = proc.communicate(payload, timeout=30)
            lines = [l for l in out.splitlines() if l.strip()]
            assert len(lines) == 3
            for req, line in zip(requests, lines):
                resp = json.loads(line)
                assert resp["id"] == req["id"]
                assert resp["ok"] is True
            pred = json.loads(lines[1])
            assert len(pred["mean"]) == 1
            assert len(pred["quantiles"][0]) == 3
            assert proc.wait(timeout=10) == 0
        finally:
            proc.kill()

    def test_malformed_request_gets_error_response_and_loop_continues(self):
        proc = subprocess.Popen(
            mock_cmd(),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        try:
            payload = (
                "garbage not json\n"
                + json.dumps({"id": 5, "op": "fit", "x": [[0.0]], "y": [1.0]})
                + "\n"
                + json.dumps({"id": 6, "op": "shutdown"})
                + "\n"
            )
            out, _ = proc.communicate(payload, timeout=30)
            lines = [json.loads(l) for l in out.splitlines() if l.strip()]
            assert lines[0]["ok"] is False
            assert lines[1] == {"id": 5, "ok": True}
            assert lines[2]["ok"] is True
        finally:
            proc.kill()

    def test_wrong_array_lengths_detected(self):
        # three queries must yield three entries per field
        bad = [
            sys.executable,
            "-c",
            (
                "import sys, json\n"
                "for line in sys.stdin:\n"
                "    req = json.loads(line)\n"
                "    if req['op'] == 'fit':\n"
                "        print(json.dumps({'id': req['id'], 'ok': True}), flush=True)\n"
                "    else:\n"
                "        print(json.dumps({'id': req['id'], 'ok': True, 'mean': [0.0],\n"
                "                          'variance': [1.0], 'quantiles': [[0.0]]}), flush=True)\n"
            ),
        ]
        from fire_mf.wire import ExternalSurrogate

        s = ExternalSurrogate(client=SidecarClient(command=bad, timeout=10))
        try:
            s.fit(np.zeros((2, 1)), np.zeros(2))
            with pytest.raises(SidecarProtocolError, match="length-3"):
                s.predict(np.zeros((3, 1)))
        finally:
            s.close()

    def test_id_echo_mismatch_detected(self):
        # a sidecar that answers with the wrong id must be rejected
        bad = [
            sys.executable,
            "-c",
            (
                "import sys, json\n"
                "for line in sys.stdin:\n"
                "    print(json.dumps({'id': 999, 'ok': True}), flush=True)\n"
            ),
        ]
        client = SidecarClient(command=bad, timeout=10)
        with pytest.raises(SidecarProtocolError, match="echo"):
            client.request("fit", x=[[0.0]], y=[0.0])
