"""HTTP JSON API around the study service.

Routes:

- ``GET /session/{reader}/{round}?seed=S&tier=T`` creates the session if
  needed and returns it with the next unanswered case payload (top-5
  suggestions appear only in round 2).
- ``POST /response`` submits a StudyResponse body.
- ``GET /report`` returns the scoring report.
- ``GET /image/{case_id}`` renders the case's synthetic image vector as an
  SVG bar strip, so browsers have something to display.
- ``GET /`` serves the optional static frontend directory.

Service state is shared; appends are serialized inside StudyService, so
concurrent readers can submit safely.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import ConflictError, ContractError, EvalignError, ProtocolError, ValidationError
from .study import StudyService

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
}


def _status_for(exc):
    if isinstance(exc, ConflictError):
        return 409
    if isinstance(exc, (ValidationError, ProtocolError, ContractError)):
        return 400
    return 500


def image_svg(values, width=320, height=96):
    """Deterministic bar-strip rendering of a numeric vector."""
    values = list(values)
    n = max(len(values), 1)
    lo = min(values) if values else 0.0
    hi = max(values) if values else 1.0
    span = (hi - lo) or 1.0
    bar_w = width / n
    bars = []
    for i, v in enumerate(values):
        frac = (v - lo) / span
        h = max(1.0, frac * (height - 4))
        x = i * bar_w
        y = height - h
        shade = int(40 + 180 * frac)
        bars.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w * 0.9:.2f}" height="{h:.2f}" '
            f'fill="rgb({shade},{90},{255 - shade})"/>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}"><rect width="100%" height="100%" fill="#10141a"/>'
        + "".join(bars)
        + "</svg>"
    )


class StudyServer:
    """Owns the HTTP server lifecycle around a StudyService."""

    def __init__(self, service: StudyService, host="127.0.0.1", port=0, images=None, static_dir=None):
        self.service = service
        self.images = images or {}
        self.static_dir = Path(static_dir) if static_dir else None
        handler = self._make_handler()
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread = None

    @property
    def address(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self.httpd.serve_forever()

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                pass  # keep test output quiet

            def _send_json(self, code, payload):
                body = json.dumps(payload, sort_keys=True).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def _send_raw(self, code, body, content_type):
                self.send_response(code)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                url = urlparse(self.path)
                parts = [p for p in url.path.split("/") if p]
                try:
                    if parts[:1] == ["session"] and len(parts) == 3:
                        query = parse_qs(url.query)
                        try:
                            round_no = int(parts[2])
                            seed = int(query.get("seed", ["0"])[0])
                        except ValueError as exc:
                            raise ValidationError(f"round and seed must be integers: {exc}") from exc
                        tier = query.get("tier", ["junior"])[0]
                        session = server.service.create_session(
                            parts[1], round_no, seed=seed, tier=tier
                        )
                        self._send_json(
                            200,
                            {
                                "reader": session.reader,
                                "round": session.round,
                                "tier": session.tier,
                                "order": session.order,
                                "progress": {
                                    "answered": len(session.answered),
                                    "total": len(session.order),
                                },
                                "completed": session.complete,
                                "next_case": server.service.next_case_payload(session),
                            },
                        )
                    elif parts[:1] == ["report"] and len(parts) == 1:
                        self._send_json(200, server.service.report())
                    elif parts[:1] == ["image"] and len(parts) == 2:
                        values = server.images.get(parts[1])
                        if values is None:
                            self._send_json(404, {"error": f"no image for {parts[1]!r}"})
                        else:
                            self._send_raw(200, image_svg(values).encode(), "image/svg+xml")
                    elif server.static_dir:
                        rel = url.path.lstrip("/") or "index.html"
                        target = (server.static_dir / rel).resolve()
                        if server.static_dir.resolve() in target.parents or target == server.static_dir.resolve():
                            if target.is_file():
                                ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                                self._send_raw(200, target.read_bytes(), ctype)
                                return
                        self._send_json(404, {"error": "not found"})
                    else:
                        self._send_json(404, {"error": "not found"})
                except EvalignError as exc:
                    self._send_json(_status_for(exc), {"error": str(exc)})
                except Exception as exc:  # pragma: no cover - defensive
                    self._send_json(500, {"error": f"internal error: {exc}"})

            def do_POST(self):
                url = urlparse(self.path)
                parts = [p for p in url.path.split("/") if p]
                try:
                    if parts == ["response"]:
                        length = int(self.headers.get("Content-Length", "0"))
                        try:
                            body = json.loads(self.rfile.read(length) or b"{}")
                        except json.JSONDecodeError:
                            self._send_json(400, {"error": "invalid JSON body"})
                            return
                        missing = {"reader", "case_id", "round", "label", "confidence"} - set(body)
                        if missing:
                            self._send_json(400, {"error": f"missing fields: {sorted(missing)}"})
                            return
                        try:
                            round_no = int(body["round"])
                        except (TypeError, ValueError):
                            self._send_json(400, {"error": "round must be an integer"})
                            return
                        ack = server.service.submit_response(
                            reader=str(body["reader"]),
                            case_id=str(body["case_id"]),
                            round=round_no,
                            label=str(body["label"]),
                            confidence=body["confidence"],
                        )
                        self._send_json(200, ack)
                    else:
                        self._send_json(404, {"error": "not found"})
                except EvalignError as exc:
                    self._send_json(_status_for(exc), {"error": str(exc)})
                except Exception as exc:  # pragma: no cover - defensive
                    self._send_json(500, {"error": f"internal error: {exc}"})

        return Handler
