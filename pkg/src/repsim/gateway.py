"""Operational surface: HTTP-style request dispatch over the simulation.

``Gateway.handle`` is the single entry point; the HTTP server and the
scenario runner are both thin adapters over it. Every mutation runs under
one lock and lands on the single simulation loop, so requests are applied
strictly in arrival order. In serve mode a pacer thread advances simulated
time in step with wall-clock time (configurable ratio) so the console demo
plays live.
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import workload_verify as wv
from .errors import InvalidArgument, RepsimError
from .simnet import FaultInjection
from .system import System


class Gateway:
    def __init__(self, system: System, static_dir: str | None = None):
        self.system = system
        self.static_dir = static_dir
        self.lock = threading.RLock()
        self._routes = [
            ("GET", re.compile(r"^/api/health$"), self._health),
            ("GET", re.compile(r"^/api/sites/(?P<site>[^/]+)/pvs$"), self._list_pvs),
            ("POST", re.compile(r"^/api/namespaces$"), self._create_namespace),
            ("GET", re.compile(r"^/api/namespaces$"), self._list_namespaces),
            ("POST", re.compile(r"^/api/namespaces/(?P<ns>[^/]+)/apps$"), self._create_app),
            ("PUT", re.compile(r"^/api/namespaces/(?P<ns>[^/]+)/tags$"), self._tag),
            ("GET", re.compile(r"^/api/groups$"), self._list_groups),
            ("GET", re.compile(r"^/api/groups/(?P<gid>[^/]+)/status$"), self._group_status),
            ("POST", re.compile(r"^/api/groups/(?P<gid>[^/]+)/snapshot-groups$"), self._create_sg),
            ("POST", re.compile(r"^/api/groups/(?P<gid>[^/]+)/failover$"), self._failover),
            ("GET", re.compile(r"^/api/snapshot-groups$"), self._list_sgs),
            ("GET", re.compile(r"^/api/snapshot-groups/(?P<sgid>[^/]+)/analytics$"), self._analytics),
            ("POST", re.compile(r"^/api/workload$"), self._start_workload),
            ("GET", re.compile(r"^/api/workloads$"), self._list_workloads),
            ("GET", re.compile(r"^/api/workload/feed$"), self._feed),
            ("POST", re.compile(r"^/api/faults$"), self._inject),
            ("GET", re.compile(r"^/api/verify$"), self._verify),
        ]

    def handle(self, method: str, path: str, body: dict | None = None,
               query: dict | None = None) -> tuple[int, dict]:
        body = body or {}
        query = query or {}
        with self.lock:
            for m, pattern, fn in self._routes:
                if m != method:
                    continue
                match = pattern.match(path)
                if match:
                    try:
                        record = fn(match, body, query)
                    except RepsimError as e:
                        return e.http_status, self._err(e)
                    record.setdefault("sim_time", self.system.sim.now)
                    return 200, record
            return 404, {"code": "not_found", "message": f"no route {method} {path}",
                         "detail": "", "sim_time": self.system.sim.now}

    def _err(self, e: RepsimError) -> dict:
        return {"code": e.code, "message": str(e), "detail": type(e).__name__,
                "sim_time": self.system.sim.now}

    # -- handlers ------------------------------------------------------------

    def _health(self, m, body, query) -> dict:
        sim = self.system.sim
        return {"status": "ok", "seed": sim.seed, "events_fired": sim.events_fired}

    def _list_pvs(self, m, body, query) -> dict:
        return {"pvs": self.system.controlplane.list_pvs(m.group("site"))}

    def _create_namespace(self, m, body, query) -> dict:
        ns = self.system.controlplane.create_namespace(body.get("name", ""))
        return {"namespace": ns.name}

    def _list_namespaces(self, m, body, query) -> dict:
        cp = self.system.controlplane
        out = []
        for ns in cp.namespaces.values():
            cr = cp.cr_for(ns.name)
            out.append({
                "name": ns.name, "tags": dict(ns.tags),
                "apps": [{"app_id": a, "claims": list(cp.apps[a].claim_ids)}
                         for a in ns.app_ids],
                "replication_cr": cr.to_record() if cr else None,
            })
        return {"namespaces": out}

    def _create_app(self, m, body, query) -> dict:
        app = self.system.controlplane.create_app(
            m.group("ns"), body.get("name", ""), body.get("claims", []))
        return {"app_id": app.app_id, "claims": list(app.claim_ids)}

    def _tag(self, m, body, query) -> dict:
        if "key" not in body or "value" not in body:
            raise InvalidArgument("tag body needs key and value")
        return self.system.controlplane.tag_namespace(
            m.group("ns"), body["key"], body["value"])

    def _list_groups(self, m, body, query) -> dict:
        eng = self.system.engine
        return {"groups": [eng.describe(gid) for gid in eng.groups]}

    def _group_status(self, m, body, query) -> dict:
        return self.system.engine.status(m.group("gid"))

    def _create_sg(self, m, body, query) -> dict:
        sg = self.system.engine.create_snapshot_group(m.group("gid"))
        return {"snapshot_group_id": sg.snapshot_group_id, "group_id": sg.group_id,
                "at_seq": sg.at_seq,
                "member_snapshot_ids": dict(sg.member_snapshot_ids)}

    def _list_sgs(self, m, body, query) -> dict:
        return {"snapshot_groups": [
            {"snapshot_group_id": sg.snapshot_group_id, "group_id": sg.group_id,
             "at_seq": sg.at_seq}
            for sg in self.system.engine.snapshot_groups.values()]}

    def _analytics(self, m, body, query) -> dict:
        return wv.analytics_report(self.system.engine, self.system.store,
                                   m.group("sgid"))

    def _failover(self, m, body, query) -> dict:
        return self.system.engine.failover(m.group("gid"))

    def _start_workload(self, m, body, query) -> dict:
        app_id = body.get("app_id")
        if not app_id and "namespace" in body and "app" in body:
            app_id = f"{body['namespace']}/{body['app']}"
        if not app_id:
            raise InvalidArgument("workload body needs app_id or namespace+app")
        workload = self.system.start_workload(
            app_id, int(body.get("count", 10)), int(body.get("seed", 1)),
            think_time_ms=body.get("think_time_ms"))
        return {"workload_id": workload.workload_id, "started": True,
                "count": workload.count}

    def _list_workloads(self, m, body, query) -> dict:
        return {"workloads": [w.summary() for w in self.system.workloads.values()]}

    def _feed(self, m, body, query) -> dict:
        since = int(query.get("since", ["0"])[0])
        feed = self.system.feed
        since = max(0, min(since, len(feed)))
        return {"lines": feed[since:], "next": len(feed)}

    def _inject(self, m, body, query) -> dict:
        kind = body.get("kind", "")
        target = body.get("target", "")
        at_time = float(body.get("at_ms", self.system.sim.now))
        fault = FaultInjection(kind=kind, target=target, at_time=at_time,
                               params=body.get("params", {}))
        return self.system.sim.inject(fault)

    def _verify(self, m, body, query) -> dict:
        target = query.get("target", [""])[0]
        if ":" not in target:
            raise InvalidArgument("verify target must be backup:<group> or snapshot:<sg>")
        kind, _, ident = target.partition(":")
        if kind == "backup":
            report = wv.verify_backup(self.system.engine, self.system.store, ident)
        elif kind == "snapshot":
            report = wv.verify_snapshot_group(self.system.engine, self.system.store, ident)
        else:
            raise InvalidArgument(f"unknown verify target kind {kind!r}")
        return report.to_record()


# -- HTTP adapter ----------------------------------------------------------------

def _make_handler(gateway: Gateway):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet: the sim trace is the log
            pass

        def _dispatch(self, method: str) -> None:
            parsed = urlparse(self.path)
            if method == "GET" and not parsed.path.startswith("/api/"):
                self._serve_static(parsed.path)
                return
            body = {}
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self._respond(400, {"code": "invalid_argument",
                                        "message": "request body is not JSON",
                                        "detail": ""})
                    return
            status, record = gateway.handle(method, parsed.path, body,
                                            parse_qs(parsed.query))
            self._respond(status, record)

        def _serve_static(self, path: str) -> None:
            import mimetypes
            import os
            root = gateway.static_dir
            if root is None:
                self._respond(404, {"code": "not_found", "message": "no console bundled",
                                    "detail": ""})
                return
            rel = path.lstrip("/") or "index.html"
            full = os.path.normpath(os.path.join(root, rel))
            if not full.startswith(os.path.normpath(root)) or not os.path.isfile(full):
                self._respond(404, {"code": "not_found", "message": path, "detail": ""})
                return
            ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
            with open(full, "rb") as f:
                data = f.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _respond(self, status: int, record: dict) -> None:
            data = json.dumps(record).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_PUT(self):
            self._dispatch("PUT")

    return Handler


class GatewayServer:
    """HTTP server plus the real-time pacer for interactive use."""

    def __init__(self, gateway: Gateway, port: int, pace_ratio: float = 1.0):
        self.gateway = gateway
        self.pace_ratio = pace_ratio
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), _make_handler(gateway))
        self.port = self.httpd.server_address[1]
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        t = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        t.start()
        self._threads.append(t)
        if self.pace_ratio > 0:
            p = threading.Thread(target=self._pace, daemon=True)
            p.start()
            self._threads.append(p)

    def _pace(self) -> None:
        last = time.monotonic()
        while not self._stop.is_set():
            time.sleep(0.05)
            now = time.monotonic()
            delta_ms = (now - last) * 1000.0 * self.pace_ratio
            last = now
            with self.gateway.lock:
                self.gateway.system.advance(delta_ms)

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()

    def serve_forever(self) -> None:
        self.start()
        try:
            while True:
                time.sleep(0.5)
        except KeyboardInterrupt:
            self.stop()
