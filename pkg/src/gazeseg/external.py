"""Client for external promptable-segmentation backends (the wire protocol).

Endpoint forms:
    http://HOST:PORT       adapter process listening on localhost HTTP
    cmd:PROGRAM ARG ...    child process speaking framed stdio

The image is sent once per ROI and cached by content hash; prompts batch at
the backend's advertised capacity. One connection is multiplexed with
request ids.
"""

from __future__ import annotations

import base64
import hashlib
import itertools
import json
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from typing import Sequence

import numpy as np

from .core import Frame, PixelPoint
from .imgio import frame_png_bytes
from .rle import decode_mask
from .segmenter import (
    BackendError,
    BackendInfo,
    BackendTimeout,
    CandidateMask,
    tight_bbox,
)
from .wire import read_frame, write_frame


def _frame_id(frame: Frame) -> str:
    return hashlib.sha256(frame.pixels.tobytes()).hexdigest()[:16]


class _HttpTransport:
    def __init__(self, endpoint: str, timeout_s: float):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s

    def request(self, message: dict) -> dict:
        data = json.dumps(message).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint + "/message",
            data=data,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except TimeoutError:
            raise BackendTimeout(f"backend timed out after {self.timeout_s}s") from None
        except urllib.error.URLError as exc:
            if isinstance(getattr(exc, "reason", None), TimeoutError):
                raise BackendTimeout(f"backend timed out after {self.timeout_s}s") from None
            raise BackendError(f"backend unreachable: {exc}") from None

    def close(self) -> None:
        pass


class _StdioTransport:
    def __init__(self, command: str, timeout_s: float):
        self.timeout_s = timeout_s
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend process: {exc}") from None

    def request(self, message: dict) -> dict:
        result: dict | None = None
        error: Exception | None = None

        def io():
            nonlocal result, error
            try:
                write_frame(self.proc.stdin, message)
                result = read_frame(self.proc.stdout)
            except Exception as exc:  # includes pipe errors
                error = exc

        t = threading.Thread(target=io, daemon=True)
        t.start()
        t.join(self.timeout_s)
        if t.is_alive():
            self.proc.kill()
            raise BackendTimeout(f"backend timed out after {self.timeout_s}s")
        if error is not None:
            raise BackendError(f"backend I/O failed: {error}")
        if result is None:
            raise BackendError("backend closed the stream")
        return result

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=5)


class ExternalBackend:
    """SegmenterBackend backed by an adapter process."""

    def __init__(self, endpoint: str, timeout_s: float = 30.0):
        if endpoint.startswith("http://") or endpoint.startswith("https://"):
            self._transport = _HttpTransport(endpoint, timeout_s)
        elif endpoint.startswith("cmd:"):
            self._transport = _StdioTransport(endpoint[len("cmd:") :], timeout_s)
        else:
            raise BackendError(f"unsupported endpoint {endpoint!r}")
        self._rid = itertools.count(1)
        self._lock = threading.Lock()
        self._sent_images: set[str] = set()
        self._info = self._hello()

    def _call(self, message: dict) -> dict:
        message = dict(message)
        with self._lock:
            message["rid"] = next(self._rid)
            reply = self._transport.request(message)
        if reply.get("type") == "error":
            raise BackendError(
                f"backend error {reply.get('code', '?')}: {reply.get('message', '')}"
            )
        if reply.get("rid") not in (None, message["rid"]):
            raise BackendError("response id does not match request id")
        return reply

    def _hello(self) -> BackendInfo:
        reply = self._call({"type": "hello"})
        return BackendInfo(
            name=str(reply.get("name", "external")),
            version=str(reply.get("version", "?")),
            max_prompts=int(reply.get("max_prompts", 64)),
        )

    def info(self) -> BackendInfo:
        return self._info

    def segment_batch(
        self, frame: Frame, points: Sequence[PixelPoint]
    ) -> list[CandidateMask | None]:
        image_id = _frame_id(frame)
        if image_id not in self._sent_images:
            self._call(
                {
                    "type": "set_image",
                    "id": image_id,
                    "png_base64": base64.b64encode(frame_png_bytes(frame)).decode("ascii"),
                }
            )
            self._sent_images.add(image_id)
        reply = self._call(
            {
                "type": "segment",
                "image_id": image_id,
                "points": [{"x": p.x, "y": p.y} for p in points],
            }
        )
        masks: list[CandidateMask | None] = []
        for payload in reply.get("masks", []):
            mask = decode_mask(
                {"size": payload["size"], "counts": payload["rle_counts"]}
            )
            if not mask.any():
                continue
            if "point" in payload:
                src = PixelPoint(int(payload["point"]["x"]), int(payload["point"]["y"]))
            else:
                src = _contained_prompt(mask, points)
            masks.append(
                CandidateMask(
                    mask=mask,
                    bbox=tight_bbox(mask),
                    confidence=float(payload.get("score", 0.0)),
                    source_prompt=src,
                )
            )
        return masks

    def close(self) -> None:
        self._transport.close()


def _contained_prompt(mask: np.ndarray, points: Sequence[PixelPoint]) -> PixelPoint:
    for p in points:
        if 0 <= p.y < mask.shape[0] and 0 <= p.x < mask.shape[1] and mask[p.y, p.x]:
            return p
    return points[0]
