"""Detector oracles: the only window the search has onto the models it evades.

An oracle maps an image to a list of scored boxes. Three kinds live here:

  * SyntheticCoverageOracle: a deterministic stand-in whose score decays with
    how much of a salience budget the applied cover hides. Cheap enough for
    brute-force cross-checks, and per-modality maps can be made to disagree,
    which is what stresses the balance between the two detectors.
  * ExternalOracle: a client for real detectors served behind the line
    protocol below, over a stdio subprocess or HTTP.
  * smooth(): the median-filter preprocessing defense.

Wire protocol (one JSON document per line on stdio; same payloads over HTTP
with GET /hello and POST /detect):

    hello    {"hello": {"protocol": 1, "modality": "visible", "max_concurrency": 4}}
    request  {"id": "...", "modality": "visible", "image_png_b64": "..."}
    response {"id": "...", "detections": [{"box": [x1, y1, x2, y2], "score": 0.93}]}

Responses may arrive out of order and are matched by id.
"""

from __future__ import annotations

import base64
import io
import json
import shlex
import subprocess
import threading
import uuid
from dataclasses import dataclass

import numpy as np
import requests
from PIL import Image
from scipy import ndimage

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 30.0

VISIBLE = "visible"
INFRARED = "infrared"


class OracleError(Exception):
    pass


class OracleTransportError(OracleError):
    """Transport-level failure; the query was not counted and may be retried."""


class OracleProtocolError(OracleError):
    """Malformed or out-of-range payload from the remote side."""


class OracleTimeoutError(OracleError):
    pass


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]
    score: float


@dataclass(frozen=True)
class OracleDescriptor:
    modality: str
    kind: str
    max_concurrency: int
    query_counter: int


def iou(box_a, box_b) -> float:
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    ix1, iy1 = max(ax1, bx1), max(ay1, by1)
    ix2, iy2 = min(ax2, bx2), min(ay2, by2)
    iw, ih = max(0.0, ix2 - ix1), max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


def target_score(detections: list[Detection], gt_box) -> float:
    """Confidence assigned to the target: max score with IoU >= 0.5, else 0."""
    best = 0.0
    for d in detections:
        if iou(d.box, gt_box) >= 0.5 and d.score > best:
            best = d.score
    return best


def detect(oracle, image: np.ndarray, modality: str) -> list[Detection]:
    """Query an oracle, enforcing that the modality matches its declaration."""
    if modality != oracle.modality:
        raise ValueError(f"oracle serves {oracle.modality!r}, asked for {modality!r}")
    return oracle.detect(image)


class SyntheticCoverageOracle:
    """Deterministic single-target oracle for desk-scale experiments.

    The score starts at `base` and decays by the salience mass of the cells
    whose pixels equal the cover value (i.e. the cells the patch actually
    hides). A detection is emitted only while the score stays above
    `score_floor`.
    """

    kind = "synthetic-coverage"

    def __init__(
        self,
        salience: np.ndarray,
        base: float,
        gt_box,
        cover_value,
        modality: str,
        score_floor: float = 0.0,
        max_concurrency: int = 64,
    ) -> None:
        if modality not in (VISIBLE, INFRARED):
            raise ValueError(f"unknown modality {modality!r}")
        if not 0.0 < base <= 1.0:
            raise ValueError(f"base score must be in (0, 1], got {base}")
        salience = np.asarray(salience, dtype=np.float64)
        if np.any(salience < 0):
            raise ValueError("salience weights must be nonnegative")
        x1, y1, x2, y2 = (int(round(v)) for v in gt_box)
        inside = salience[y1:y2, x1:x2].sum()
        if abs(inside - 1.0) > 1e-9 or abs(salience.sum() - 1.0) > 1e-9:
            raise ValueError("salience must sum to 1 within the target box")
        self.salience = salience
        self.base = float(base)
        self.gt_box = tuple(float(v) for v in gt_box)
        self.cover_value = np.asarray(cover_value)
        self.modality = modality
        self.score_floor = float(score_floor)
        self.max_concurrency = max_concurrency
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def queries(self) -> int:
        return self._queries

    def descriptor(self) -> OracleDescriptor:
        return OracleDescriptor(self.modality, self.kind, self.max_concurrency, self._queries)

    def _covered_fraction(self, image: np.ndarray) -> float:
        if self.modality == VISIBLE:
            eq = np.all(image == self.cover_value.reshape(1, 1, 3), axis=2)
        else:
            eq = image == self.cover_value
        return float((self.salience * eq).sum())

    def detect(self, image: np.ndarray) -> list[Detection]:
        if image.shape[:2] != self.salience.shape:
            raise ValueError("image dimensions do not match this oracle's scene")
        covered = self._covered_fraction(image)
        score = max(0.0, self.base * (1.0 - covered))
        with self._lock:
            self._queries += 1
        if score <= self.score_floor:
            return []
        return [Detection(self.gt_box, score)]


def _encode_png(image: np.ndarray) -> str:
    mode = "RGB" if image.ndim == 3 else "L"
    buf = io.BytesIO()
    Image.fromarray(image, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def parse_hello(payload: dict) -> tuple[str, int]:
    """Validate a hello document; returns (modality, max_concurrency)."""
    try:
        hello = payload["hello"]
        protocol = hello["protocol"]
        modality = hello["modality"]
        max_concurrency = hello["max_concurrency"]
    except (KeyError, TypeError) as exc:
        raise OracleProtocolError(f"malformed hello: {payload!r}") from exc
    if protocol != PROTOCOL_VERSION:
        raise OracleProtocolError(f"protocol version {protocol} unsupported")
    if modality not in (VISIBLE, INFRARED):
        raise OracleProtocolError(f"unknown modality {modality!r}")
    if not isinstance(max_concurrency, int) or max_concurrency < 1:
        raise OracleProtocolError(f"bad max_concurrency {max_concurrency!r}")
    return modality, max_concurrency


def parse_detections(payload: dict, frame: tuple[int, int] | None = None) -> list[Detection]:
    """Validate a response document and return its detections.

    Scores outside [0, 1] are protocol errors; boxes are clamped to the frame
    when its size is known.
    """
    if "detections" not in payload or not isinstance(payload["detections"], list):
        raise OracleProtocolError(f"malformed response: {payload!r}")
    out = []
    for det in payload["detections"]:
        try:
            box = [float(v) for v in det["box"]]
            score = float(det["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise OracleProtocolError(f"malformed detection: {det!r}") from exc
        if len(box) != 4 or not all(np.isfinite(box)):
            raise OracleProtocolError(f"bad box: {box!r}")
        if not 0.0 <= score <= 1.0:
            raise OracleProtocolError(f"score out of range: {score}")
        if frame is not None:
            h, w = frame
            box = [
                min(max(box[0], 0.0), w),
                min(max(box[1], 0.0), h),
                min(max(box[2], 0.0), w),
                min(max(box[3], 0.0), h),
            ]
        out.append(Detection(tuple(box), score))
    return out


class _StdioTransport:
    """Line-oriented subprocess transport with an id-matching reader thread."""

    def __init__(self, command: str, handshake_timeout: float = DEFAULT_TIMEOUT_S) -> None:
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleTransportError(f"could not spawn {command!r}: {exc}") from exc
        self._write_lock = threading.Lock()
        self._pending: dict[str, dict] = {}
        self._events: dict[str, threading.Event] = {}
        self._pending_lock = threading.Lock()
        self._dead: Exception | None = None

        box: list[str] = []
        reader = threading.Thread(target=lambda: box.append(self.proc.stdout.readline()), daemon=True)
        reader.start()
        reader.join(handshake_timeout)
        if not box:
            self.proc.terminate()
            raise OracleTimeoutError(f"no hello within {handshake_timeout}s")
        if not box[0]:
            raise OracleTransportError("oracle process closed stdout before hello")
        try:
            self.hello = json.loads(box[0])
        except json.JSONDecodeError as exc:
            raise OracleProtocolError(f"hello is not JSON: {box[0]!r}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        for line in self.proc.stdout:
            try:
                payload = json.loads(line)
            except json.JSONDecodeError:
                continue  # garbage line; matching request will time out
            rid = payload.get("id")
            with self._pending_lock:
                ev = self._events.get(rid)
                if ev is not None:
                    self._pending[rid] = payload
                    ev.set()
        with self._pending_lock:
            self._dead = OracleTransportError("oracle process closed its stdout")
            for ev in self._events.values():
                ev.set()

    def round_trip(self, request: dict, timeout: float) -> dict:
        rid = request["id"]
        ev = threading.Event()
        with self._pending_lock:
            if self._dead is not None:
                raise self._dead
            self._events[rid] = ev
        try:
            with self._write_lock:
                self.proc.stdin.write(json.dumps(request) + "\n")
                self.proc.stdin.flush()
            if not ev.wait(timeout):
                raise OracleTimeoutError(f"no response for {rid} within {timeout}s")
            with self._pending_lock:
                if self._dead is not None and rid not in self._pending:
                    raise self._dead
                return self._pending.pop(rid)
        finally:
            with self._pending_lock:
                self._events.pop(rid, None)
                self._pending.pop(rid, None)

    def close(self) -> None:
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.terminate()
        self.proc.wait(timeout=5)


class _HttpTransport:
    def __init__(self, endpoint: str) -> None:
        self.endpoint = endpoint.rstrip("/")
        try:
            resp = requests.get(self.endpoint + "/hello", timeout=DEFAULT_TIMEOUT_S)
            resp.raise_for_status()
            self.hello = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise OracleTransportError(f"handshake with {endpoint} failed: {exc}") from exc

    def round_trip(self, request: dict, timeout: float) -> dict:
        try:
            resp = requests.post(self.endpoint + "/detect", json=request, timeout=timeout)
            resp.raise_for_status()
        except requests.Timeout as exc:
            raise OracleTimeoutError(str(exc)) from exc
        except requests.RequestException as exc:
            raise OracleTransportError(str(exc)) from exc
        try:
            return resp.json()
        except ValueError as exc:
            raise OracleProtocolError(f"response is not JSON: {resp.text!r}") from exc

    def close(self) -> None:
        pass


class ExternalOracle:
    """Client for a detector served behind the wire protocol.

    Endpoint descriptors: "stdio:<command line>" or "http(s)://host:port".
    At most the server-declared max_concurrency requests are in flight.
    """

    kind = "external"

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT_S, retries: int = 1) -> None:
        if endpoint.startswith("stdio:"):
            self._transport = _StdioTransport(endpoint[len("stdio:"):], handshake_timeout=timeout)
        elif endpoint.startswith(("http://", "https://")):
            self._transport = _HttpTransport(endpoint)
        else:
            raise ValueError(f"unrecognized oracle endpoint {endpoint!r}")
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.modality, self.max_concurrency = parse_hello(self._transport.hello)
        self._sem = threading.Semaphore(self.max_concurrency)
        self._queries = 0
        self._lock = threading.Lock()

    @property
    def queries(self) -> int:
        return self._queries

    def descriptor(self) -> OracleDescriptor:
        return OracleDescriptor(self.modality, self.kind, self.max_concurrency, self._queries)

    def detect(self, image: np.ndarray) -> list[Detection]:
        request = {
            "id": uuid.uuid4().hex,
            "modality": self.modality,
            "image_png_b64": _encode_png(image),
        }
        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with self._sem:
                    payload = self._transport.round_trip(request, self.timeout)
                break
            except OracleTransportError as exc:
                last = exc
        else:
            raise last  # type: ignore[misc]
        if payload.get("error"):
            raise OracleProtocolError(f"oracle error: {payload['error']}")
        detections = parse_detections(payload, frame=image.shape[:2])
        with self._lock:
            self._queries += 1
        return detections

    def close(self) -> None:
        self._transport.close()


def smooth(image: np.ndarray, window: int) -> np.ndarray:
    """Median filter with edge replication; per channel for RGB input."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    if window == 1:
        return image.copy()
    if image.ndim == 3:
        out = np.empty_like(image)
        for c in range(image.shape[2]):
            out[:, :, c] = ndimage.median_filter(image[:, :, c], size=window, mode="nearest")
        return out
    return ndimage.median_filter(image, size=window, mode="nearest")
