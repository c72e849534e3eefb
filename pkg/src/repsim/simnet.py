"""Deterministic discrete-event scheduler with an inter-site link model.

Logical time is simulated milliseconds (float). Everything that can vary
from run to run flows through one seeded PRNG (jitter, drops), so the same
(seed, scenario) pair always yields the same event trace.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import InvalidArgument, NotFound

MAIN = "main"
BACKUP = "backup"
SITES = (MAIN, BACKUP)


@dataclass
class LinkConfig:
    link_id: str
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    drop_probability: float = 0.0
    partitioned: bool = False

    def validate(self) -> None:
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise InvalidArgument(f"link {self.link_id}: negative delay")
        if not (0.0 <= self.drop_probability < 1.0):
            raise InvalidArgument(f"link {self.link_id}: drop_probability out of [0,1)")


@dataclass
class FaultInjection:
    kind: str  # site_failure | partition | delay_change
    target: str  # site name or link id
    at_time: float = 0.0
    params: dict = field(default_factory=dict)


class _Link:
    def __init__(self, config: LinkConfig):
        self.config = config
        # FIFO guarantee: jitter may delay the queue head but never reorders,
        # so deliveries are forced monotone per link.
        self.last_delivery = 0.0
        self.held: list[tuple[str, Callable[[], None]]] = []
        self.sent = 0
        self.delivered = 0
        self.dropped = 0


class Simulator:
    """Single-threaded event loop; the only executor in the system."""

    def __init__(self, seed: int = 0, trace: bool = False):
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0.0
        self._queue: list[tuple[float, int, Callable[[], None], str, bool]] = []
        self._seq = 0
        self._pending_work = 0  # non-daemon events in queue
        self.links: dict[str, _Link] = {}
        self.failed_sites: set[str] = set()
        self.trace_enabled = trace
        self.trace_lines: list[str] = []
        self.events_fired = 0

    # -- clock + queue ----------------------------------------------------

    def schedule(self, delay_ms: float, action: Callable[[], None],
                 label: str = "", daemon: bool = False) -> int:
        if delay_ms < 0:
            raise InvalidArgument("negative delay")
        self._seq += 1
        heapq.heappush(self._queue, (self.now + delay_ms, self._seq, action, label, daemon))
        if not daemon:
            self._pending_work += 1
        return self._seq

    def _fire_next(self) -> None:
        fire_time, _, action, label, daemon = heapq.heappop(self._queue)
        if not daemon:
            self._pending_work -= 1
        self.now = max(self.now, fire_time)
        self.events_fired += 1
        if label and self.trace_enabled:
            self.trace("fire", label)
        action()

    def run_until(self, time_ms: float) -> int:
        """Fire every event due at or before time_ms; clock ends at time_ms."""
        fired = 0
        while self._queue and self._queue[0][0] <= time_ms:
            self._fire_next()
            fired += 1
        self.now = max(self.now, time_ms)
        return fired

    def run_until_idle(self, max_events: int | None = None) -> int:
        """Run until only daemon events (periodic background ticks) remain."""
        fired = 0
        while self._pending_work > 0:
            if max_events is not None and fired >= max_events:
                raise RuntimeError(f"not idle after {max_events} events")
            self._fire_next()
            fired += 1
        return fired

    def run_steps(self, n: int) -> int:
        """Fire up to n events of any kind; used to cut runs at an event index."""
        fired = 0
        while self._queue and fired < n:
            self._fire_next()
            fired += 1
        return fired

    @property
    def pending_events(self) -> int:
        return len(self._queue)

    # -- links -------------------------------------------------------------

    def add_link(self, config: LinkConfig) -> None:
        config.validate()
        if config.link_id in self.links:
            raise InvalidArgument(f"link {config.link_id} already exists")
        self.links[config.link_id] = _Link(config)

    def link(self, link_id: str) -> LinkConfig:
        try:
            return self.links[link_id].config
        except KeyError:
            raise NotFound(f"link {link_id}") from None

    def send(self, link_id: str, deliver: Callable[[], None], label: str = "msg") -> bool:
        """Hand a message to a link. Returns False when the seeded draw drops it.

        Partitioned links hold messages and release them in send order on heal.
        """
        link = self.links.get(link_id)
        if link is None:
            raise NotFound(f"link {link_id}")
        cfg = link.config
        link.sent += 1
        if cfg.drop_probability > 0.0 and self.rng.random() < cfg.drop_probability:
            link.dropped += 1
            self.trace("drop", f"{link_id} {label}")
            return False
        if cfg.partitioned:
            link.held.append((label, deliver))
            self.trace("hold", f"{link_id} {label}")
            return True
        self._schedule_delivery(link, deliver, label)
        return True

    def _schedule_delivery(self, link: _Link, deliver: Callable[[], None], label: str) -> None:
        cfg = link.config
        delay = cfg.latency_ms
        if cfg.jitter_ms > 0.0:
            delay += self.rng.uniform(0.0, cfg.jitter_ms)
        at = max(self.now + delay, link.last_delivery)
        link.last_delivery = at
        self.trace("send", f"{cfg.link_id} {label}")

        def fire() -> None:
            link.delivered += 1
            self.trace("deliver", f"{cfg.link_id} {label}")
            deliver()

        self.schedule(at - self.now, fire)

    # -- faults ------------------------------------------------------------

    def inject(self, fault: FaultInjection) -> dict:
        if fault.at_time < self.now:
            raise InvalidArgument("at_time is in the past")
        if fault.kind == "site_failure":
            if fault.target not in SITES:
                raise NotFound(f"site {fault.target}")
        elif fault.kind in ("partition", "delay_change"):
            if fault.target not in self.links:
                raise NotFound(f"link {fault.target}")
        else:
            raise InvalidArgument(f"unknown fault kind {fault.kind}")

        def apply() -> None:
            self.trace("fault", f"{fault.kind} {fault.target}")
            if fault.kind == "site_failure":
                self.failed_sites.add(fault.target)
            elif fault.kind == "partition":
                link = self.links[fault.target]
                was = link.config.partitioned
                link.config.partitioned = bool(fault.params.get("partitioned", True))
                if was and not link.config.partitioned:
                    self._release_held(link)
            elif fault.kind == "delay_change":
                cfg = self.links[fault.target].config
                if "latency_ms" in fault.params:
                    cfg.latency_ms = float(fault.params["latency_ms"])
                if "jitter_ms" in fault.params:
                    cfg.jitter_ms = float(fault.params["jitter_ms"])
                if "drop_probability" in fault.params:
                    cfg.drop_probability = float(fault.params["drop_probability"])
                cfg.validate()

        self.schedule(fault.at_time - self.now, apply, label=f"fault:{fault.kind}")
        return {"kind": fault.kind, "target": fault.target, "at_time": fault.at_time}

    def _release_held(self, link: _Link) -> None:
        held, link.held = link.held, []
        for label, deliver in held:
            self._schedule_delivery(link, deliver, label)

    def site_ok(self, site: str) -> bool:
        return site not in self.failed_sites

    # -- trace ---------------------------------------------------------------

    def trace(self, kind: str, detail: str) -> None:
        if self.trace_enabled:
            self.trace_lines.append(f"t={self.now:g} ev={kind} detail={detail}")
