"""HTTP session service hosting the human-in-the-loop annotation flow.

Endpoints (JSON bodies unless noted):

    POST   /session                      multipart or raw PNG -> {id}
    POST   /session/{id}/gaze            {samples:[{t_ms,x,y,valid}]}
                                         -> {accepted_count, version}
    GET    /session/{id}/result?since=v  -> {version, trace_version, masks,
                                         dkf_report, overlay_png_base64}
                                         (204 when nothing newer than v)
    POST   /session/{id}/mask/{k}/verdict  {"verdict": "accept"|"reject"}
    POST   /session/{id}/finalize        -> {mask_png_base64, record}
                                         (409 while a pass is in flight)
    DELETE /session/{id}

Gaze batches feed an incremental gaze-map accumulator; a debounced
processing pass (default 300 ms of inactivity) recomputes ROIs, saliency,
prompts, segmentation and the domain filter, then bumps the result version.
Each session serializes its passes; reads only ever see complete results.
"""

from __future__ import annotations

import json
import re
import threading
import uuid
from dataclasses import asdict
from email.parser import BytesParser
from email.policy import default as _email_policy
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .core import Frame, PipelineConfig
from .gaze import GazeMapAccumulator, GazeSample
from .imgio import frame_from_png_bytes, frame_png_bytes, mask_png_bytes, png_base64
from .pipeline import render_overlay, run_pipeline, union_mask
from .segmenter import SegmenterBackend
from .wire import mask_payload

DEFAULT_DEBOUNCE_MS = 300.0


class Session:
    def __init__(self, sid: str, frame: Frame, config: PipelineConfig):
        self.id = sid
        self.frame = frame
        self.lock = threading.RLock()
        self.acc = GazeMapAccumulator(frame.width, frame.height, config.sigma_px)
        self.samples: list[GazeSample] = []
        self.trace_version = 0  # total samples accepted into the trace
        self.processing = False
        self.version = 0  # result version counter
        self.result_trace_version = 0
        self.masks = []
        self.reports = []
        self.overlay_b64 = ""
        self.verdicts: dict[int, str] = {}
        self.timer: threading.Timer | None = None
        self.finalized = False

    @property
    def status(self) -> str:
        if self.processing:
            return "processing"
        return "ready" if self.version > 0 else "idle"


class SessionService:
    """All session state plus the debounced processing machinery."""

    def __init__(
        self,
        config: PipelineConfig,
        backend: SegmenterBackend,
        debounce_ms: float = DEFAULT_DEBOUNCE_MS,
        state_dir: str | Path | None = None,
    ):
        self.config = config
        self.backend = backend
        self.debounce_s = max(0.0, debounce_ms) / 1e3
        self.state_dir = Path(state_dir) if state_dir else None
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        if self.state_dir is not None:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    # -- session lifecycle ------------------------------------------------

    def create_session(self, png_bytes: bytes) -> Session:
        frame = frame_from_png_bytes(png_bytes)
        sid = uuid.uuid4().hex[:12]
        s = Session(sid, frame, self.config)
        with self.lock:
            self.sessions[sid] = s
        if self.state_dir is not None:
            d = self.state_dir / sid
            d.mkdir(parents=True, exist_ok=True)
            (d / "image.png").write_bytes(frame_png_bytes(frame))
            (d / "trace.csv").write_text("t_ms,x,y,valid\n", encoding="utf-8")
        return s

    def get(self, sid: str) -> Session | None:
        with self.lock:
            return self.sessions.get(sid)

    def delete(self, sid: str) -> bool:
        with self.lock:
            s = self.sessions.pop(sid, None)
        if s is None:
            return False
        with s.lock:
            if s.timer is not None:
                s.timer.cancel()
        if self.state_dir is not None:
            import shutil

            shutil.rmtree(self.state_dir / sid, ignore_errors=True)
        return True

    def _restore(self) -> None:
        from .gaze import read_trace

        for d in sorted(self.state_dir.iterdir()):
            if not d.is_dir() or not (d / "image.png").exists():
                continue
            try:
                frame = frame_from_png_bytes((d / "image.png").read_bytes())
                s = Session(d.name, frame, self.config)
                trace_path = d / "trace.csv"
                if trace_path.exists():
                    try:
                        trace = read_trace(trace_path)
                        s.samples = list(trace.samples)
                        s.trace_version = len(s.samples)
                        s.acc.add(s.samples)
                    except Exception:
                        pass
                self.sessions[d.name] = s
                if s.samples:
                    self._schedule(s)
            except Exception:
                continue

    # -- gaze ingestion + processing --------------------------------------

    def ingest_gaze(self, s: Session, samples: list[GazeSample]) -> tuple[int, int]:
        """Validate and append one batch; returns (accepted, trace_version).

        An out-of-bounds valid sample rejects the whole batch; the caller
        maps the raised ValueError (carrying the index) to HTTP 422.
        """
        for i, smp in enumerate(samples):
            if smp.valid and not (
                0 <= smp.x < s.frame.width and 0 <= smp.y < s.frame.height
            ):
                raise IndexError(i)
        with s.lock:
            s.samples.extend(samples)
            s.trace_version = len(s.samples)
            s.acc.add(samples)
            accepted = len(samples)
            tv = s.trace_version
        if self.state_dir is not None:
            d = self.state_dir / s.id
            if d.is_dir():
                with open(d / "trace.csv", "a", encoding="utf-8") as fh:
                    for smp in samples:
                        fh.write(
                            f"{smp.t_ms},{smp.x},{smp.y},{1 if smp.valid else 0}\n"
                        )
        self._schedule(s)
        return accepted, tv

    def _schedule(self, s: Session) -> None:
        with s.lock:
            if s.timer is not None:
                s.timer.cancel()
            s.timer = threading.Timer(self.debounce_s, self._process, args=(s,))
            s.timer.daemon = True
            s.timer.start()

    def _process(self, s: Session) -> None:
        with s.lock:
            if s.processing:
                return
            if s.acc.deposited == 0:
                return
            already = s.version > 0 and s.result_trace_version == s.trace_version
            if already:
                return
            s.processing = True
            snapshot = s.acc.snapshot()
            tv = s.trace_version
            frame = s.frame
        try:
            result = run_pipeline(
                frame, None, self.config, self.backend, gaze_map=snapshot
            )
            overlay = render_overlay(frame, result.masks)
            overlay_b64 = png_base64(frame_png_bytes(overlay))
        except Exception:
            with s.lock:
                s.processing = False
            raise
        with s.lock:
            s.masks = result.masks
            s.reports = result.reports
            s.overlay_b64 = overlay_b64
            s.version += 1
            s.result_trace_version = tv
            s.verdicts = {}
            s.processing = False
            stale = s.trace_version > tv
        if stale:
            self._schedule(s)

    # -- views -------------------------------------------------------------

    def result_payload(self, s: Session) -> dict:
        with s.lock:
            return {
                "version": s.version,
                "trace_version": s.result_trace_version,
                "status": s.status,
                "masks": [mask_payload(m) for m in s.masks],
                "dkf_report": [asdict(r) for r in s.reports],
                "overlay_png_base64": s.overlay_b64,
            }

    def finalize(self, s: Session) -> dict | None:
        """None signals "still processing" (HTTP 409)."""
        with s.lock:
            if s.processing:
                return None
            unprocessed = s.trace_version > s.result_trace_version
        if unprocessed:
            threading.Thread(target=self._process, args=(s,), daemon=True).start()
            return None
        with s.lock:
            keep = [
                m for k, m in enumerate(s.masks) if s.verdicts.get(k, "accept") != "reject"
            ]
            final = union_mask(keep, (s.frame.height, s.frame.width))
            png = mask_png_bytes(final.values)
            record = {
                "session": s.id,
                "result_version": s.version,
                "trace_version": s.result_trace_version,
                "n_candidates": len(s.masks),
                "n_accepted": len(keep),
                "verdicts": {str(k): v for k, v in sorted(s.verdicts.items())},
            }
            s.finalized = True
        if self.state_dir is not None:
            d = self.state_dir / s.id
            if d.is_dir():
                (d / "final_mask.png").write_bytes(png)
                (d / "record.json").write_text(
                    json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8"
                )
        return {"mask_png_base64": png_base64(png), "record": record}


# -- HTTP plumbing ----------------------------------------------------------

_SESSION_RE = re.compile(r"^/session/([0-9a-f]+)$")
_GAZE_RE = re.compile(r"^/session/([0-9a-f]+)/gaze$")
_RESULT_RE = re.compile(r"^/session/([0-9a-f]+)/result(?:\?.*)?$")
_VERDICT_RE = re.compile(r"^/session/([0-9a-f]+)/mask/(\d+)/verdict$")
_FINALIZE_RE = re.compile(r"^/session/([0-9a-f]+)/finalize$")


def _parse_multipart_image(content_type: str, body: bytes) -> bytes | None:
    raw = b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    msg = BytesParser(policy=_email_policy).parsebytes(raw)
    if not msg.is_multipart():
        return None
    fallback = None
    for part in msg.iter_parts():
        payload = part.get_payload(decode=True)
        if payload is None:
            continue
        name = part.get_param("name", header="content-disposition")
        if name == "image" or part.get_content_type() == "image/png":
            return payload
        if fallback is None and part.get_filename():
            fallback = payload
    return fallback


def make_server(service: SessionService, host: str = "127.0.0.1", port: int = 0):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _json(self, code: int, payload: dict) -> None:
            data = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def _empty(self, code: int) -> None:
            self.send_response(code)
            self.send_header("Content-Length", "0")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()

        def _body(self) -> bytes:
            length = int(self.headers.get("Content-Length", 0))
            return self.rfile.read(length) if length else b""

        def _session_or_404(self, sid: str):
            s = service.get(sid)
            if s is None:
                self._json(404, {"error": f"no session {sid}"})
            return s

        def do_OPTIONS(self):  # noqa: N802 - CORS preflight for the UI
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_POST(self):  # noqa: N802
            path = self.path
            if path == "/session":
                body = self._body()
                ctype = self.headers.get("Content-Type", "")
                png = None
                if ctype.startswith("multipart/"):
                    png = _parse_multipart_image(ctype, body)
                elif body:
                    png = body
                if not png:
                    self._json(400, {"error": "expected a PNG image upload"})
                    return
                try:
                    s = service.create_session(png)
                except Exception as exc:
                    self._json(400, {"error": str(exc)})
                    return
                self._json(201, {"id": s.id})
                return

            m = _GAZE_RE.match(path)
            if m:
                s = self._session_or_404(m.group(1))
                if s is None:
                    return
                try:
                    payload = json.loads(self._body().decode("utf-8"))
                    samples = [
                        GazeSample(
                            t_ms=float(smp["t_ms"]),
                            x=float(smp["x"]),
                            y=float(smp["y"]),
                            valid=bool(smp.get("valid", True)),
                        )
                        for smp in payload["samples"]
                    ]
                except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
                    self._json(400, {"error": f"bad gaze payload: {exc}"})
                    return
                try:
                    accepted, version = service.ingest_gaze(s, samples)
                except IndexError as exc:
                    self._json(
                        422,
                        {"error": "gaze sample outside image bounds", "index": exc.args[0]},
                    )
                    return
                self._json(200, {"accepted_count": accepted, "version": version})
                return

            m = _VERDICT_RE.match(path)
            if m:
                s = self._session_or_404(m.group(1))
                if s is None:
                    return
                k = int(m.group(2))
                try:
                    verdict = json.loads(self._body().decode("utf-8")).get("verdict")
                except json.JSONDecodeError:
                    verdict = None
                if verdict not in ("accept", "reject"):
                    self._json(400, {"error": "verdict must be accept or reject"})
                    return
                with s.lock:
                    if k < 0 or k >= len(s.masks):
                        self._json(404, {"error": f"no mask {k}"})
                        return
                    s.verdicts[k] = verdict
                self._json(200, {"ok": True, "mask": k, "verdict": verdict})
                return

            m = _FINALIZE_RE.match(path)
            if m:
                s = self._session_or_404(m.group(1))
                if s is None:
                    return
                out = service.finalize(s)
                if out is None:
                    self._json(409, {"error": "session is processing; retry"})
                    return
                self._json(200, out)
                return

            self._json(404, {"error": f"unknown endpoint {path}"})

        def do_GET(self):  # noqa: N802
            m = _RESULT_RE.match(self.path)
            if m:
                s = self._session_or_404(m.group(1))
                if s is None:
                    return
                since = 0
                if "?" in self.path:
                    from urllib.parse import parse_qs, urlparse

                    q = parse_qs(urlparse(self.path).query)
                    try:
                        since = int(q.get("since", ["0"])[0])
                    except ValueError:
                        since = 0
                payload = service.result_payload(s)
                if payload["version"] <= since:
                    self._empty(204)
                    return
                self._json(200, payload)
                return
            self._json(404, {"error": f"unknown endpoint {self.path}"})

        def do_DELETE(self):  # noqa: N802
            m = _SESSION_RE.match(self.path)
            if m:
                if service.delete(m.group(1)):
                    self._empty(204)
                else:
                    self._json(404, {"error": "no such session"})
                return
            self._json(404, {"error": f"unknown endpoint {self.path}"})

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


def serve(
    bind_addr: str,
    config: PipelineConfig,
    backend: SegmenterBackend,
    debounce_ms: float = DEFAULT_DEBOUNCE_MS,
    state_dir=None,
):
    """Build the server; caller runs serve_forever()."""
    host, _, port_s = bind_addr.partition(":")
    port = int(port_s) if port_s else 0
    service = SessionService(config, backend, debounce_ms=debounce_ms, state_dir=state_dir)
    server = make_server(service, host or "127.0.0.1", port)
    return server, service
