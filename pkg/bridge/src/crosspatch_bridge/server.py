"""Protocol server: line-delimited JSON over stdio, or HTTP.

Protocol (version 1):
    hello    {"hello": {"protocol": 1, "modality": "...", "max_concurrency": 1}}
    request  {"id": "...", "modality": "...", "image_png_b64": "..."}
    response {"id": "...", "detections": [{"box": [x1, y1, x2, y2], "score": s}]}
    error    {"id": "...", "error": "why"}

Malformed requests produce an error response with the id echoed when it can
be recovered; the process stays alive. Model load failures abort startup.
"""

from __future__ import annotations

import base64
import http.server
import io
import json
import sys
import threading

import numpy as np
from PIL import Image

from .config import BridgeConfig

PROTOCOL_VERSION = 1


class BadRequest(ValueError):
    def __init__(self, message: str, request_id=None) -> None:
        super().__init__(message)
        self.request_id = request_id


def hello_payload(config: BridgeConfig) -> dict:
    return {
        "hello": {
            "protocol": PROTOCOL_VERSION,
            "modality": config.modality,
            "max_concurrency": 1,
        }
    }


def decode_request(payload: dict, config: BridgeConfig) -> tuple[str, np.ndarray]:
    if not isinstance(payload, dict):
        raise BadRequest("request is not an object")
    rid = payload.get("id")
    if not isinstance(rid, str) or not rid:
        raise BadRequest("missing request id")
    modality = payload.get("modality")
    if modality != config.modality:
        raise BadRequest(f"this bridge serves {config.modality!r}, got {modality!r}", rid)
    raw = payload.get("image_png_b64")
    if not isinstance(raw, str):
        raise BadRequest("missing image_png_b64", rid)
    try:
        blob = base64.b64decode(raw, validate=True)
        image = Image.open(io.BytesIO(blob))
        image.load()
    except Exception as exc:
        raise BadRequest(f"payload is not a decodable PNG: {exc}", rid) from exc
    if config.modality == "visible":
        arr = np.asarray(image.convert("RGB"))
    else:
        arr = np.asarray(image.convert("L"))
    return rid, arr


def response_payload(rid: str, detections, floor: float) -> dict:
    return {
        "id": rid,
        "detections": [
            {"box": [float(v) for v in box], "score": float(score)}
            for box, score in detections
            if score >= floor
        ],
    }


def handle_line(line: str, model, config: BridgeConfig) -> dict:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"id": None, "error": f"not JSON: {exc}"}
    try:
        rid, image = decode_request(payload, config)
    except BadRequest as exc:
        return {"id": exc.request_id, "error": str(exc)}
    detections = model(image)
    return response_payload(rid, detections, config.confidence_floor)


def serve_stdio(model, config: BridgeConfig, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stdout.write(json.dumps(hello_payload(config)) + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(handle_line(line, model, config)) + "\n")
        stdout.flush()


def make_http_server(model, config: BridgeConfig):
    lock = threading.Lock()  # max_concurrency 1: one inference at a time

    class Handler(http.server.BaseHTTPRequestHandler):
        def _send(self, payload: dict, status: int = 200) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/hello":
                self._send(hello_payload(config))
            else:
                self._send({"error": "unknown path"}, status=404)

        def do_POST(self):
            if self.path != "/detect":
                self._send({"error": "unknown path"}, status=404)
                return
            length = int(self.headers.get("Content-Length", "0"))
            line = self.rfile.read(length).decode("utf-8", errors="replace")
            with lock:
                self._send(handle_line(line, model, config))

        def log_message(self, *args):
            pass

    return http.server.ThreadingHTTPServer(("127.0.0.1", config.http_port), Handler)
