"""crosspatch-bridge entry point."""

from __future__ import annotations

import argparse
import sys

from .config import BridgeConfig, BridgeConfigError
from .models import BridgeModelError, load_model
from .server import make_http_server, serve_stdio


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosspatch-bridge", description=__doc__)
    parser.add_argument("--model", default="torchvision:fasterrcnn_resnet50_fpn",
                        help="model identifier (torchvision:<name> or stub:*)")
    parser.add_argument("--modality", default="visible", choices=("visible", "infrared"))
    parser.add_argument("--floor", type=float, default=0.05, help="confidence floor")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--listen", default="stdio", help="stdio or http:<port>")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(
            model=args.model,
            modality=args.modality,
            confidence_floor=args.floor,
            device=args.device,
            listen=args.listen,
        ).validate()
    except BridgeConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        model = load_model(config.model, device=config.device)
    except BridgeModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    if config.listen == "stdio":
        try:
            serve_stdio(model, config)
        except (BrokenPipeError, KeyboardInterrupt):
            pass
        return 0
    server = make_http_server(model, config)
    print(f"serving {config.modality} on http://127.0.0.1:{server.server_address[1]}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
