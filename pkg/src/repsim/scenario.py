"""Line-oriented scenario files: ``verb key=value ...`` with # comments.

Unknown verbs or malformed arguments are rejected at parse time with the
line number (exit 2). ``assert`` commands compare observed values and fail
the run (exit 1) with expected/observed. Runs are deterministic for a
given (file, seed): the emitted report is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import workload_verify as wv
from .errors import InvalidArgument, RepsimError
from .simnet import FaultInjection
from .system import System

VERBS = {"create-ns", "create-app", "tag", "run-workload", "snapshot-group",
         "inject", "failover", "verify", "advance", "assert"}

_REQUIRED_ARGS = {
    "create-ns": ("name",),
    "create-app": ("ns", "name"),
    "tag": ("ns", "value"),
    "run-workload": (),  # app_id or ns+app, checked below
    "snapshot-group": ("group",),
    "inject": ("kind", "target"),
    "failover": ("group",),
    "verify": ("target",),
    "advance": (),  # ms, steps, or until, checked below
    "assert": ("name", "value"),
}

EXIT_OK = 0
EXIT_ASSERT = 1
EXIT_PARSE = 2

_OPS = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "ge": lambda a, b: a >= b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "lt": lambda a, b: a < b,
}


@dataclass
class ScenarioCommand:
    verb: str
    args: dict[str, str]
    line_no: int


class ScenarioParseError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def parse_scenario(text: str) -> list[ScenarioCommand]:
    commands = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        verb = parts[0]
        if verb not in VERBS:
            raise ScenarioParseError(line_no, f"unknown verb {verb!r}")
        args = {}
        for part in parts[1:]:
            if "=" not in part:
                raise ScenarioParseError(line_no, f"malformed argument {part!r}")
            key, _, value = part.partition("=")
            args[key] = value
        for required in _REQUIRED_ARGS[verb]:
            if required not in args:
                raise ScenarioParseError(line_no, f"{verb} needs {required}=")
        if verb == "run-workload" and "app_id" not in args \
                and not ("ns" in args and "app" in args):
            raise ScenarioParseError(line_no, "run-workload needs app_id= or ns= app=")
        if verb == "advance" and not ({"ms", "steps", "until"} & args.keys()):
            raise ScenarioParseError(line_no, "advance needs ms=, steps= or until=idle")
        commands.append(ScenarioCommand(verb, args, line_no))
    return commands


def _coerce(value: str):
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


class ScenarioRunner:
    def __init__(self, system: System):
        self.system = system
        self.report_lines: list[str] = []
        self.last_verify: wv.VerificationReport | None = None
        self.last_failover: dict = {}
        self.last_snapshot: dict = {}
        self.last_workload = None

    def run(self, commands: list[ScenarioCommand]) -> int:
        for cmd in commands:
            handler = getattr(self, "_" + cmd.verb.replace("-", "_"))
            try:
                outcome = handler(cmd.args)
            except RepsimError as e:
                self._note(cmd, f"error {e.code}: {e}")
                return EXIT_ASSERT
            except AssertionFailure as e:
                self._note(cmd, str(e))
                return EXIT_ASSERT
            self._note(cmd, outcome)
        return EXIT_OK

    def _note(self, cmd: ScenarioCommand, outcome: str) -> None:
        args = " ".join(f"{k}={v}" for k, v in cmd.args.items())
        self.report_lines.append(
            f"line {cmd.line_no}: {cmd.verb} {args} -> {outcome}".rstrip())

    def report(self) -> str:
        return "\n".join(self.report_lines) + "\n"

    # -- verbs ------------------------------------------------------------

    def _create_ns(self, args: dict) -> str:
        ns = self.system.controlplane.create_namespace(args["name"])
        return f"namespace {ns.name}"

    def _create_app(self, args: dict) -> str:
        claims = []
        for part in args.get("claims", "").split(","):
            if not part:
                continue
            name, _, blocks = part.partition(":")
            claims.append({"name": name, "blocks": int(blocks or 1024)})
        app = self.system.controlplane.create_app(args["ns"], args["name"], claims)
        return f"app {app.app_id} claims={len(app.claim_ids)}"

    def _tag(self, args: dict) -> str:
        key = args.get("key", "backup-policy")
        self.system.controlplane.tag_namespace(args["ns"], key, args["value"])
        return f"tagged {args['ns']} {key}={args['value']}"

    def _run_workload(self, args: dict) -> str:
        app_id = args.get("app_id") or f"{args['ns']}/{args['app']}"
        think = float(args["think"]) if "think" in args else None
        workload = self.system.start_workload(
            app_id, int(args.get("count", 10)), int(args.get("seed", 1)),
            think_time_ms=think)
        self.last_workload = workload
        return f"workload {workload.workload_id} count={workload.count}"

    def _snapshot_group(self, args: dict) -> str:
        sg = self.system.engine.create_snapshot_group(args["group"])
        analytics = wv.analytics_report(self.system.engine, self.system.store,
                                        sg.snapshot_group_id)
        oracle = wv.oracle_analytics(self.system.engine, sg.group_id, sg.at_seq)
        self.last_snapshot = {
            "snapshot_group_id": sg.snapshot_group_id,
            "at_seq": sg.at_seq,
            "analytics_count": analytics["committed_count"],
            "analytics_amount": analytics["total_sales_amount"],
            "analytics_matches_oracle": (
                analytics["committed_count"] == oracle["committed_count"]
                and analytics["total_sales_amount"] == oracle["total_sales_amount"]),
        }
        return (f"{sg.snapshot_group_id} at_seq={sg.at_seq} "
                f"committed={analytics['committed_count']} "
                f"amount={analytics['total_sales_amount']}")

    def _inject(self, args: dict) -> str:
        at = args.get("at", "")
        if at.startswith("+"):
            at_time = self.system.sim.now + float(at[1:])
        elif at:
            at_time = float(at)
        else:
            at_time = self.system.sim.now
        params = {}
        if "latency" in args:
            params["latency_ms"] = float(args["latency"])
        if "jitter" in args:
            params["jitter_ms"] = float(args["jitter"])
        if "drop" in args:
            params["drop_probability"] = float(args["drop"])
        if "partitioned" in args:
            params["partitioned"] = args["partitioned"].lower() == "true"
        fault = FaultInjection(kind=args["kind"], target=args["target"],
                               at_time=at_time, params=params)
        self.system.sim.inject(fault)
        return f"scheduled {args['kind']} {args['target']} at={at_time:g}"

    def _failover(self, args: dict) -> str:
        result = self.system.engine.failover(args["group"])
        self.last_failover = result
        return (f"recovered={result['recovered_applied_seq']} "
                f"lost={result['lost_entries']}")

    def _verify(self, args: dict) -> str:
        target = args["target"]
        kind, _, ident = target.partition(":")
        if kind == "backup":
            report = wv.verify_backup(self.system.engine, self.system.store, ident)
        elif kind == "snapshot":
            report = wv.verify_snapshot_group(self.system.engine, self.system.store, ident)
        else:
            raise InvalidArgument(f"unknown verify target {target!r}")
        self.last_verify = report
        return (f"committed={len(report.committed_txids)} "
                f"incomplete={len(report.incomplete_txids)} "
                f"torn={len(report.torn_txids)} prefix_ok={report.prefix_ok}")

    def _advance(self, args: dict) -> str:
        if args.get("until") == "idle":
            fired = self.system.run_until_idle()
            return f"idle after {fired} events t={self.system.sim.now:g}"
        if "steps" in args:
            fired = self.system.run_steps(int(args["steps"]))
            return f"{fired} events t={self.system.sim.now:g}"
        fired = self.system.advance(float(args["ms"]))
        return f"{fired} events t={self.system.sim.now:g}"

    def _assert(self, args: dict) -> str:
        name = args["name"]
        op = args.get("op", "eq")
        if op not in _OPS:
            raise AssertionFailure(f"unknown op {op!r}")
        expected = _coerce(args["value"])
        observed = self._observed(name, args)
        if not _OPS[op](observed, expected):
            raise AssertionFailure(
                f"ASSERT FAILED {name}: expected {op} {expected}, observed {observed}")
        return f"assert {name} {op} {expected} ok (observed {observed})"

    def _observed(self, name: str, args: dict):
        if name in ("torn", "committed", "incomplete"):
            if self.last_verify is None:
                raise AssertionFailure(f"{name}: no verify has run")
            return len(getattr(self.last_verify, name + "_txids"))
        if name in ("prefix_ok", "max_recovered_txid"):
            if self.last_verify is None:
                raise AssertionFailure(f"{name}: no verify has run")
            return getattr(self.last_verify, name)
        if name in ("lost", "recovered"):
            key = "lost_entries" if name == "lost" else "recovered_applied_seq"
            if key not in self.last_failover:
                raise AssertionFailure(f"{name}: no failover has run")
            return self.last_failover[key]
        if name in ("at_seq", "analytics_count", "analytics_amount",
                    "analytics_matches_oracle"):
            if name not in self.last_snapshot:
                raise AssertionFailure(f"{name}: no snapshot-group has run")
            return self.last_snapshot[name]
        if name in ("lag", "acked", "applied", "shipped", "phase"):
            status = self.system.engine.status(args["group"])
            key = {"lag": "lag_entries", "acked": "acked_seq",
                   "applied": "applied_seq", "shipped": "shipped_seq",
                   "phase": "phase"}[name]
            return status[key]
        if name in ("main_pvs", "backup_pvs"):
            site = name.split("_")[0]
            return len(self.system.controlplane.list_pvs(site))
        if name == "groups":
            return len(self.system.engine.groups)
        if name in ("workload_acked", "workload_completed", "workload_mean_latency",
                    "workload_done"):
            if self.last_workload is None:
                raise AssertionFailure(f"{name}: no workload has run")
            summary = self.last_workload.summary()
            key = {"workload_acked": "acked_count",
                   "workload_completed": "completed_tx",
                   "workload_mean_latency": "mean_ack_latency",
                   "workload_done": "done"}[name]
            return summary[key]
        raise AssertionFailure(f"unknown observable {name!r}")


class AssertionFailure(Exception):
    pass


def run_scenario_file(path: str, system: System) -> tuple[int, str]:
    """Parse + execute a scenario file. Returns (exit_code, report_text)."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        return EXIT_PARSE, f"cannot read scenario: {e}\n"
    try:
        commands = parse_scenario(text)
    except ScenarioParseError as e:
        return EXIT_PARSE, f"parse error: {e}\n"
    runner = ScenarioRunner(system)
    code = runner.run(commands)
    return code, runner.report()
