"""HTTP server mode: POST /detect with the same response schema as stdio.

Requests may arrive concurrently; detection runs per request thread.
"""

from __future__ import annotations

import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .protocol import RequestError, decode_image


def make_handler(detector):
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path != "/detect":
                self._reply(404, {"error": f"no such endpoint {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                message = json.loads(self.rfile.read(length))
                if not isinstance(message, dict):
                    raise RequestError("expected a JSON object")
                pixels = decode_image(message)
            except (RequestError, json.JSONDecodeError, ValueError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            except Exception as exc:
                self._reply(500, {"error": f"internal error: {exc}"})
                return
            request_id = message.get("id")
            self._reply(
                200,
                {
                    "id": request_id if isinstance(request_id, int) else 0,
                    "detections": detector.detect(pixels),
                },
            )

        def log_message(self, *args):
            pass

    return Handler


def serve_http(detector, listen: str) -> None:
    host, _, port_text = listen.partition(":")
    host = host or "127.0.0.1"
    port = int(port_text) if port_text else 0
    server = ThreadingHTTPServer((host, port), make_handler(detector))
    bound = f"http://{server.server_address[0]}:{server.server_address[1]}"
    print(f"listening on {bound}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
