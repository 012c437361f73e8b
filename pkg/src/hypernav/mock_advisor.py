"""Scriptable mock advisor HTTP server for integration tests.

Serves the wire protocol from :mod:`hypernav.advisor` and replays entries
from a script (JSON list). Entries:

* ``"block 3"`` or ``{"text": "block 3"}`` -- answer with that text
* ``{"status": 500}`` -- fail once with that HTTP status
* ``{"sleep": 2.5}`` -- stall before answering (timeout testing)

The script sticks at its last entry when exhausted. Every received request is
recorded on ``server.requests`` for assertions.

Run standalone: ``python -m hypernav.mock_advisor script.json [port]``.
"""

from __future__ import annotations

import json
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        server: MockAdvisorServer = self.server  # type: ignore[assignment]
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            payload = None
        entry = server.next_entry()
        server.requests.append(payload)
        if isinstance(entry, dict) and "sleep" in entry:
            time.sleep(float(entry["sleep"]))
            entry = {"text": str(entry.get("text", ""))}
        if isinstance(entry, dict) and "status" in entry:
            self.send_response(int(entry["status"]))
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        if isinstance(entry, dict) and entry.get("raw") is not None:
            body = str(entry["raw"]).encode("utf-8")   # malformed-response testing
        else:
            text = entry.get("text", "") if isinstance(entry, dict) else str(entry)
            body = json.dumps({"text": str(text)}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class MockAdvisorServer(ThreadingHTTPServer):
    def __init__(self, entries, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        if not entries:
            raise ValueError("mock advisor needs at least one script entry")
        self.entries = list(entries)
        self.requests: list = []
        self._cursor = 0
        self._lock = threading.Lock()

    def next_entry(self):
        with self._lock:
            entry = self.entries[min(self._cursor, len(self.entries) - 1)]
            self._cursor += 1
            return entry

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def start_mock_advisor(entries, port: int = 0) -> MockAdvisorServer:
    """Start a mock advisor on a background thread; caller shuts it down."""
    server = MockAdvisorServer(entries, port=port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: python -m hypernav.mock_advisor SCRIPT.json [PORT]", file=sys.stderr)
        return 2
    with open(argv[0], "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    port = int(argv[1]) if len(argv) > 1 else 0
    server = MockAdvisorServer(entries, port=port)
    print(server.base_url, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
