"""CLI launcher: `encoder-service --model clip:<checkpoint> --port 8089`."""

from __future__ import annotations

import argparse

import uvicorn

from .app import ServiceConfig, create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="encoder-service")
    parser.add_argument(
        "--model",
        default="tiny",
        help="model spec: tiny | tiny:<seed> | clip:<hf checkpoint>",
    )
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8089)
    parser.add_argument("--max-bytes", type=int, default=16 * 1024 * 1024)
    args = parser.parse_args(argv)

    config = ServiceConfig(
        model_spec=args.model,
        device=args.device,
        port=args.port,
        max_request_bytes=args.max_bytes,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
