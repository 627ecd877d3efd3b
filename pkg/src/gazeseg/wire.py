"""Segmenter wire protocol: framed-stdio and localhost-HTTP transports.

Messages are JSON objects with a "type" field and a client-chosen request
id "rid" echoed back by the server:

    hello {}                          -> hello {name, version, max_prompts}
    set_image {id, png_base64}        -> ok {id}
    segment {image_id, points:[{x,y}]} -> masks {masks:[{rle_counts, size,
                                           bbox, score, point}]}
    anything failing                  -> error {code, message}

Stdio frames are length-prefixed with a 4-byte big-endian count. Mask runs
are column-major, alternating 0/1, first run counting zeros (see rle.py).
"""

from __future__ import annotations

import json
import struct
import sys
from typing import BinaryIO

import numpy as np

from .core import PixelPoint
from .imgio import frame_from_png_bytes
from .rle import encode_mask
from .segmenter import CandidateMask, SegmenterBackend

MAX_FRAME_BYTES = 64 * 1024 * 1024


class ProtocolError(Exception):
    pass


def write_frame(stream: BinaryIO, message: dict) -> None:
    data = json.dumps(message, sort_keys=True).encode("utf-8")
    stream.write(struct.pack(">I", len(data)))
    stream.write(data)
    stream.flush()


def read_frame(stream: BinaryIO) -> dict | None:
    header = stream.read(4)
    if not header:
        return None
    if len(header) < 4:
        raise ProtocolError("truncated frame header")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    data = stream.read(length)
    if len(data) < length:
        raise ProtocolError("truncated frame body")
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad frame payload: {exc}") from None


def mask_payload(cm: CandidateMask) -> dict:
    rle = encode_mask(cm.mask)
    return {
        "rle_counts": rle["counts"],
        "size": rle["size"],
        "bbox": list(cm.bbox),
        "score": cm.confidence,
        "point": {"x": cm.source_prompt.x, "y": cm.source_prompt.y},
    }


class AdapterSession:
    """Protocol request handler hosting any in-process backend."""

    def __init__(self, backend: SegmenterBackend):
        self.backend = backend
        self.images: dict[str, object] = {}

    def handle(self, msg: dict) -> dict:
        rid = msg.get("rid")
        try:
            reply = self._dispatch(msg)
        except Exception as exc:  # surface as protocol error, keep serving
            reply = {"type": "error", "code": "backend-error", "message": str(exc)}
        if rid is not None:
            reply["rid"] = rid
        return reply

    def _dispatch(self, msg: dict) -> dict:
        mtype = msg.get("type")
        if mtype == "hello":
            info = self.backend.info()
            return {
                "type": "hello",
                "name": info.name,
                "version": info.version,
                "max_prompts": info.max_prompts,
            }
        if mtype == "set_image":
            image_id = str(msg["id"])
            import base64

            frame = frame_from_png_bytes(base64.b64decode(msg["png_base64"]))
            self.images[image_id] = frame
            return {"type": "ok", "id": image_id}
        if mtype == "segment":
            image_id = str(msg["image_id"])
            if image_id not in self.images:
                return {
                    "type": "error",
                    "code": "unknown-image",
                    "message": f"image {image_id!r} was never set",
                }
            frame = self.images[image_id]
            points = [PixelPoint(int(p["x"]), int(p["y"])) for p in msg["points"]]
            masks = self.backend.segment_batch(frame, points)
            return {
                "type": "masks",
                "masks": [mask_payload(cm) for cm in masks if cm is not None],
            }
        return {
            "type": "error",
            "code": "unknown-message",
            "message": f"unsupported message type {mtype!r}",
        }


def serve_stdio(backend: SegmenterBackend, stdin=None, stdout=None) -> None:
    """Serve the protocol over framed stdio until EOF."""
    inp = stdin if stdin is not None else sys.stdin.buffer
    out = stdout if stdout is not None else sys.stdout.buffer
    session = AdapterSession(backend)
    while True:
        msg = read_frame(inp)
        if msg is None:
            return
        write_frame(out, session.handle(msg))


def serve_http(backend: SegmenterBackend, host: str = "127.0.0.1", port: int = 0):
    """Serve the protocol over HTTP POST /message; returns the bound server.

    Call .serve_forever() (or run in a thread) after reading .server_port.
    """
    from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

    session = AdapterSession(backend)

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 - stdlib naming
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            try:
                msg = json.loads(body.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                reply = {"type": "error", "code": "bad-json", "message": "unparseable body"}
            else:
                reply = session.handle(msg)
            data = json.dumps(reply, sort_keys=True).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):  # silence request logging
            pass

    return ThreadingHTTPServer((host, port), Handler)
