"""`tfm-server` entry point.

Exit codes: 0 clean shutdown, 2 bad arguments, 4 model load failure.
"""
from __future__ import annotations

import argparse
import sys

from .model import ModelLoadError, load_backend
from .server import DEFAULT_MAX_CONTEXT, serve

EXIT_MODEL_LOAD = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfm-server",
        description="In-context surrogate server speaking the bridge protocol on stdio")
    parser.add_argument("--backend", default="reference",
                        help="surrogate backend: reference (built-in) or tabpfn")
    parser.add_argument("--device", default="cpu", help="torch device string")
    parser.add_argument("--n-estimators", type=int, default=1, dest="n_estimators",
                        help="ensemble members; keep 1 for the differentiable path")
    parser.add_argument("--max-context-size", type=int, default=DEFAULT_MAX_CONTEXT,
                        dest="max_context_size",
                        help="hard cap on context rows + candidate rows per request")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        backend = load_backend(args.backend, args.n_estimators, args.device)
    except ModelLoadError as exc:
        print(f"model load failed: {exc}", file=sys.stderr)
        return EXIT_MODEL_LOAD
    return serve(backend, max_context=args.max_context_size)


if __name__ == "__main__":
    sys.exit(main())
