from __future__ import annotations

import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from llambo.bench import get_task


def branin_reply(x1: float, x2: float) -> str:
    return json.dumps({"x1": x1, "x2": x2})


@pytest.fixture
def branin():
    return get_task("synthetic/Branin")


@pytest.fixture
def stalled_server():
    """A TCP listener that accepts connections and never answers."""
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    sock.listen(8)
    conns = []
    stop = threading.Event()

    def accept():
        sock.settimeout(0.05)
        while not stop.is_set():
            try:
                conns.append(sock.accept()[0])
            except OSError:
                continue

    t = threading.Thread(target=accept, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{sock.getsockname()[1]}"
    stop.set()
    t.join(1)
    for c in conns:
        c.close()
    sock.close()


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests.append((self.path, body))
        status, payload = self.server.responder(self.path, body)
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def mock_server():
    """Local HTTP server; set ``server.responder(path, body) -> (status, json)``."""
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    server.requests = []
    server.responder = lambda path, body: (200, {"response": "0.5"})
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    server.url = f"http://127.0.0.1:{server.server_address[1]}"
    yield server
    server.shutdown()
    server.server_close()


# -- acceptance summary ---------------------------------------------------------------
# Tests tagged ``@pytest.mark.criterion(n)`` are folded into one verdict per
# criterion, printed at the end of the session together with any recorded
# ``detail`` properties.

_VERDICTS: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.skipped or report.failed):
        return
    state = _VERDICTS.setdefault(marker.args[0], {"outcomes": set(), "details": []})
    state["outcomes"].add("SKIP" if report.skipped else "FAIL" if report.failed else "PASS")
    if report.when == "call":
        state["details"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        s = _VERDICTS[n]
        verdict = next(v for v in ("FAIL", "PASS", "SKIP") if v in s["outcomes"])
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}")
        for d in s["details"]:
            terminalreporter.write_line(f"    {d}")
