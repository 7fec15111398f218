"""Local stand-in for the imagery API, driven by a JSON fixture.

Fixture format: a JSON object mapping "lat,lon" keys (7 decimal places,
exactly as the client formats them) to canned metadata responses, e.g.

    {
      "6.5244000,3.3792000": {"status": "OK", "pano_id": "p1", "date": "2017-05"},
      "0.0000000,1.0000000": {"status": "ZERO_RESULTS"},
      "0.0000000,2.0000000": {"status": "OK", "fail_first": 2}
    }

``fail_first: N`` makes the first N metadata hits for that location fail
with HTTP 503, for exercising retry behavior. Locations absent from the
fixture answer with ``default_status`` (ZERO_RESULTS unless overridden by
a "__default__" entry). A 1x1 JPEG is served for OK image requests.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

# smallest syntactically valid JPEG: SOI + EOI with a comment segment
TINY_JPEG = bytes.fromhex("ffd8fffe00046d6fffd9")


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def do_GET(self):
        parsed = urlparse(self.path)
        params = parse_qs(parsed.query)
        location = params.get("location", [""])[0]
        server: MockStreetViewServer = self.server  # type: ignore[assignment]
        with server.lock:
            server.request_count += 1
            server.requested_locations.append(location)
        if parsed.path == "/maps/api/streetview/metadata":
            self._serve_metadata(server, location)
        elif parsed.path == "/maps/api/streetview":
            self._serve_image(server, location)
        else:
            self._reply(404, {"status": "NOT_FOUND"})

    def _serve_metadata(self, server, location):
        entry = server.fixture.get(location)
        if entry is None:
            self._reply(200, {"status": server.default_status})
            return
        fail_first = entry.get("fail_first", 0)
        if fail_first:
            with server.lock:
                hits = server.failure_hits.get(location, 0)
                if hits < fail_first:
                    server.failure_hits[location] = hits + 1
                    self._reply(503, {"status": "UNKNOWN_ERROR"})
                    return
        body = {"status": entry.get("status", "OK")}
        if body["status"] == "OK":
            body["pano_id"] = entry.get("pano_id", f"pano-{location}")
            body["date"] = entry.get("date", "2017-06")
        self._reply(200, body)

    def _serve_image(self, server, location):
        entry = server.fixture.get(location, {"status": server.default_status})
        if entry.get("status", "OK") == "OK":
            data = TINY_JPEG
            self.send_response(200)
            self.send_header("Content-Type", "image/jpeg")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        else:
            self._reply(404, {"status": entry.get("status")})

    def _reply(self, code, payload):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class MockStreetViewServer(ThreadingHTTPServer):
    """Fixture-driven imagery API mock bound to an ephemeral local port."""

    def __init__(self, fixture: dict | str | Path, port: int = 0):
        if not isinstance(fixture, dict):
            fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
        self.fixture = dict(fixture)
        default_entry = self.fixture.pop("__default__", None)
        self.default_status = (default_entry or {}).get("status", "ZERO_RESULTS")
        self.request_count = 0
        self.requested_locations: list[str] = []
        self.failure_hits: dict[str, int] = {}
        self.lock = threading.Lock()
        self._thread: threading.Thread | None = None
        super().__init__(("127.0.0.1", port), _Handler)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def start(self) -> "MockStreetViewServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(
        description="Serve a canned imagery-API fixture for offline runs")
    parser.add_argument("fixture", help="JSON fixture file")
    parser.add_argument("--port", type=int, default=8787)
    args = parser.parse_args(argv)
    server = MockStreetViewServer(args.fixture, port=args.port)
    print(f"mock imagery API listening on {server.base_url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.server_close()


if __name__ == "__main__":
    main()
