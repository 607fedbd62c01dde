"""Model clients: deterministic color-keyed mocks and a newline-delimited JSON socket transport.

Wire format, one JSON object per line::

    -> {"id": 7, "op": "detect", "image": <base64 PNG>}
    <- {"id": 7, "ok": true, "detections": [Detection.to_dict(), ...]}
    -> {"id": 8, "op": "segment", "image": ..., "point": [x, y]}
    <- {"id": 8, "ok": true, "masks": [<rle>, <rle>, <rle>], "scores": [s0, s1, s2]}
    -> {"id": 9, "op": "inpaint", "image": ..., "mask": <rle>, "seed": s}
    <- {"id": 9, "ok": true, "image": <base64 PNG>}
    -> {"id": 10, "op": "augment", "image": ..., "seed": s, "noise": 0.05}
    <- {"id": 10, "ok": true, "image": <base64 PNG>}

Failures answer ``{"id": ..., "ok": false, "error": "..."}``.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import socket
import socketserver
import threading
import zlib
from typing import Protocol

import numpy as np
from PIL import Image
from scipy import ndimage

from ..categories import LABEL_ID, PALETTE, TARGET_CATEGORIES
from ..geometry import connected_components, pixel_bbox_of
from ..maskio import decode_rle, encode_rle
from .types import Detection

log = logging.getLogger(__name__)

RING_WIDTH = 5


class ClientError(RuntimeError):
    """A client call failed; the image being processed is skipped."""


class ClientUnavailable(ConnectionError):
    """The client endpoint could not be reached at all."""


class ModelClients(Protocol):
    def detect(self, image: np.ndarray) -> list[Detection]: ...

    def segment(self, image: np.ndarray, point: tuple[int, int]) -> list[tuple[np.ndarray, float]]: ...

    def inpaint(self, image: np.ndarray, mask: np.ndarray, seed: int) -> np.ndarray: ...

    def augment(self, image: np.ndarray, seed: int, noise: float) -> np.ndarray: ...


def _digest(*arrays) -> int:
    h = 0
    for a in arrays:
        h = zlib.crc32(np.ascontiguousarray(a).tobytes(), h)
    return h


class MockClients:
    """Deterministic stand-ins for the detector, segmenter, inpainter and augmenter.

    * detect: connected regions painted in a target category's palette color.
    * segment: three masks around the prompt (eroded, exact, dilated) with
      scores drawn from a generator seeded by the request content.
    * inpaint: masked pixels take the mean color of a ring around the mask,
      or the input is echoed back when ``inpaint_mode="echo"``.
    * augment: seeded Gaussian pixel noise with sigma ``noise * 255``.
    """

    def __init__(self, seed: int = 0, min_area: int = 12, with_masks: bool = True,
                 inpaint_mode: str = "ring", detect_nothing: bool = False):
        if inpaint_mode not in ("ring", "echo"):
            raise ValueError(f"unknown inpaint mode {inpaint_mode!r}")
        self.seed = int(seed)
        self.min_area = int(min_area)
        self.with_masks = with_masks
        self.inpaint_mode = inpaint_mode
        self.detect_nothing = detect_nothing

    def detect(self, image):
        img = np.asarray(image, dtype=np.uint8)
        if self.detect_nothing:
            return []
        out = []
        for cat in TARGET_CATEGORIES:
            color = np.array(PALETTE[LABEL_ID[cat]], dtype=np.uint8)
            hit = np.all(img == color, axis=-1)
            if not hit.any():
                continue
            for comp in connected_components(hit):
                area = int(comp.sum())
                if area < self.min_area:
                    continue
                box = pixel_bbox_of(comp)
                fill = area / ((box.x_max - box.x_min + 1) * (box.y_max - box.y_min + 1))
                out.append(Detection(cat, box, round(0.5 + 0.5 * fill, 6), comp if self.with_masks else None))
        return out

    def segment(self, image, point):
        img = np.asarray(image, dtype=np.uint8)
        x, y = int(point[0]), int(point[1])
        h, w = img.shape[:2]
        if not (0 <= x < w and 0 <= y < h):
            raise ClientError(f"prompt {point} outside the image")
        same = np.all(img == img[y, x], axis=-1)
        lab, _ = ndimage.label(same, structure=np.ones((3, 3), bool))
        exact = lab == lab[y, x]
        eroded = ndimage.binary_erosion(exact)
        if not eroded.any():
            eroded = exact.copy()
        dilated = ndimage.binary_dilation(exact, iterations=2)
        rng = np.random.default_rng([self.seed, _digest(img, np.array([x, y]))])
        u = rng.random(3)
        scores = [round(0.55 + 0.3 * u[0], 6), round(0.80 + 0.2 * u[1], 6), round(0.50 + 0.3 * u[2], 6)]
        return [(eroded, scores[0]), (exact, scores[1]), (dilated, scores[2])]

    def inpaint(self, image, mask, seed=0):
        img = np.asarray(image, dtype=np.uint8)
        m = np.asarray(mask, dtype=bool)
        if self.inpaint_mode == "echo" or not m.any():
            return img.copy()
        ring = ndimage.binary_dilation(m, iterations=RING_WIDTH) & ~m
        fill = img[ring].mean(axis=0) if ring.any() else img[~m].mean(axis=0) if (~m).any() else np.zeros(3)
        out = img.copy()
        out[m] = np.round(fill).astype(np.uint8)
        return out

    def augment(self, image, seed=0, noise=0.05):
        img = np.asarray(image, dtype=np.uint8)
        rng = np.random.default_rng([self.seed, int(seed)])
        n = rng.normal(0.0, noise * 255.0, size=img.shape)
        return np.clip(np.round(img + n), 0, 255).astype(np.uint8)


# ------------------------------------------------------------------ wire helpers


def encode_image(img) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(s: str) -> np.ndarray:
    with Image.open(io.BytesIO(base64.b64decode(s))) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def handle_request(clients, req: dict) -> dict:
    """Serve one decoded request with ``clients``."""
    rid = req.get("id")
    try:
        op = req["op"]
        img = decode_image(req["image"])
        if op == "detect":
            body = {"detections": [d.to_dict() for d in clients.detect(img)]}
        elif op == "segment":
            cands = clients.segment(img, tuple(req["point"]))
            body = {"masks": [encode_rle(m) for m, _ in cands], "scores": [float(s) for _, s in cands]}
        elif op == "inpaint":
            body = {"image": encode_image(clients.inpaint(img, decode_rle(req["mask"]), int(req.get("seed", 0))))}
        elif op == "augment":
            out = clients.augment(img, int(req.get("seed", 0)), float(req.get("noise", 0.05)))
            body = {"image": encode_image(out)}
        else:
            raise ValueError(f"unknown op {op!r}")
    except Exception as e:  # reported to the caller, never fatal for the server
        return {"id": rid, "ok": False, "error": f"{type(e).__name__}: {e}"}
    return {"id": rid, "ok": True, **body}


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {addr!r}")
    return host, int(port)


class SocketClients:
    """Client contract over a TCP connection to an NDJSON model server.

    Requests are serialized over one connection, so concurrent callers are safe.
    """

    def __init__(self, address: str, timeout: float = 30.0):
        self.address = parse_address(address)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._next = 0
        try:
            self._sock = socket.create_connection(self.address, timeout=timeout)
        except OSError as e:
            raise ClientUnavailable(f"cannot reach model server at {address}: {e}") from e
        self._file = self._sock.makefile("rwb")

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _call(self, payload: dict) -> dict:
        with self._lock:
            self._next += 1
            payload = {"id": self._next, **payload}
            try:
                self._file.write(json.dumps(payload).encode() + b"\n")
                self._file.flush()
                line = self._file.readline()
            except OSError as e:
                raise ClientError(f"transport failure: {e}") from e
        if not line:
            raise ClientError("server closed the connection")
        resp = json.loads(line)
        if resp.get("id") != payload["id"]:
            raise ClientError("response id mismatch")
        if not resp.get("ok"):
            raise ClientError(resp.get("error", "unknown server error"))
        return resp

    def detect(self, image):
        r = self._call({"op": "detect", "image": encode_image(image)})
        return [Detection.from_dict(d) for d in r["detections"]]

    def segment(self, image, point):
        r = self._call({"op": "segment", "image": encode_image(image), "point": [int(point[0]), int(point[1])]})
        return [(decode_rle(m), float(s)) for m, s in zip(r["masks"], r["scores"])]

    def inpaint(self, image, mask, seed=0):
        r = self._call({"op": "inpaint", "image": encode_image(image), "mask": encode_rle(mask), "seed": int(seed)})
        return decode_image(r["image"])

    def augment(self, image, seed=0, noise=0.05):
        r = self._call({"op": "augment", "image": encode_image(image), "seed": int(seed), "noise": float(noise)})
        return decode_image(r["image"])


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                req = json.loads(line)
            except json.JSONDecodeError as e:
                resp = {"id": None, "ok": False, "error": f"bad JSON: {e}"}
            else:
                resp = handle_request(self.server.clients, req)
            self.wfile.write(json.dumps(resp).encode() + b"\n")
            self.wfile.flush()


class ModelServer(socketserver.ThreadingTCPServer):
    """NDJSON server wrapping any client implementation (the mocks by default)."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, clients=None, host: str = "127.0.0.1", port: int = 0):
        self.clients = clients if clients is not None else MockClients()
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t

    def stop(self):
        self.shutdown()
        self.server_close()


def make_clients(spec: str, seed: int = 0):
    """``"mock"``, ``"mock-echo"``, ``"mock-empty"`` or ``"socket:HOST:PORT"``."""
    if spec == "mock":
        return MockClients(seed)
    if spec == "mock-echo":
        return MockClients(seed, inpaint_mode="echo")
    if spec == "mock-empty":
        return MockClients(seed, detect_nothing=True)
    if spec.startswith("socket:"):
        return SocketClients(spec[len("socket:"):])
    raise ValueError(f"unknown client mode {spec!r}")
