"""PNG I/O boundaries for frames and binary masks."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from .core import Frame, GrayMap, InvalidParameterError


def load_frame(path) -> Frame:
    try:
        img = Image.open(path).convert("RGB")
    except Exception as exc:
        raise InvalidParameterError(f"{path}: cannot read image: {exc}") from None
    return Frame(np.asarray(img, dtype=np.uint8))


def save_frame(frame: Frame, path) -> None:
    Image.fromarray(frame.pixels, mode="RGB").save(path, format="PNG")


def frame_png_bytes(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def frame_from_png_bytes(data: bytes) -> Frame:
    try:
        img = Image.open(io.BytesIO(data)).convert("RGB")
    except Exception as exc:
        raise InvalidParameterError(f"cannot decode PNG: {exc}") from None
    return Frame(np.asarray(img, dtype=np.uint8))


def load_mask(path) -> GrayMap:
    try:
        img = Image.open(path).convert("L")
    except Exception as exc:
        raise InvalidParameterError(f"{path}: cannot read mask: {exc}") from None
    return GrayMap((np.asarray(img) > 127).astype(np.float64))


def save_mask(mask: GrayMap | np.ndarray, path) -> None:
    v = mask.values if isinstance(mask, GrayMap) else np.asarray(mask)
    Image.fromarray(((v > 0) * 255).astype(np.uint8), mode="L").save(path, format="PNG")


def mask_png_bytes(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(((np.asarray(mask) > 0) * 255).astype(np.uint8), mode="L").save(
        buf, format="PNG"
    )
    return buf.getvalue()


def png_base64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")
