"""CLI entry point: `python -m tfm_sidecar` or the `tfm-sidecar` script."""

from __future__ import annotations

import argparse
import sys

from tfm_sidecar.model import load_adapter
from tfm_sidecar.server import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tfm-sidecar",
        description="serve a tabular foundation model over the surrogate wire protocol",
    )
    parser.add_argument(
        "--backend",
        choices=("tabpfn", "stub"),
        default="tabpfn",
        help="stub is a protocol-testing double, not a foundation model",
    )
    parser.add_argument("--model-id", default=None,
                        help="checkpoint path or identifier; backend default when omitted")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    def factory():
        return load_adapter(args.backend, args.model_id, args.device, args.seed)

    return serve(factory)


if __name__ == "__main__":
    sys.exit(main())
