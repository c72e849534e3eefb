"""Container-platform analog: namespaces, apps, claims, PVs, custom
resources, and the namespace operator.

The operator is level-triggered: every cycle it looks at namespace tags,
ensures exactly one replication custom resource per tagged namespace, and
drives the storage plugin until the declared state holds. A converged pass
performs zero actions. Tagging kicks an immediate extra cycle so batch
runs converge without waiting for the periodic tick.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .blockstore import BlockStore
from .errors import Conflict, InvalidArgument, NotFound, RepsimError
from .replication import GROUPED, MODES, ReplicationEngine
from .simnet import MAIN, SITES, Simulator

TRIGGER_KEY = "backup-policy"
# The paper-visible value configures the operator's default mode; the other
# two exist to script the misconfiguration and latency-comparison scenarios.
TRIGGER_VALUES = {
    "ConsistentCopyToCloud": None,  # operator default (normally grouped)
    "PerVolumeCopyToCloud": "per_volume",
    "SynchronousCopyToCloud": "synchronous",
}
RECONCILE_PERIOD_MS = 100.0


@dataclass
class NamespaceRecord:
    name: str
    tags: dict[str, str] = field(default_factory=dict)
    app_ids: list[str] = field(default_factory=list)


@dataclass
class AppRecord:
    app_id: str
    namespace: str
    name: str
    claim_ids: list[str] = field(default_factory=list)


@dataclass
class VolumeClaim:
    claim_id: str
    namespace: str
    app_id: str
    name: str
    requested_blocks: int
    bound_pv_id: str | None = None


@dataclass
class PersistentVolume:
    pv_id: str
    site: str
    volume_id: str
    bound_claim_id: str | None = None

    def to_record(self) -> dict:
        return {"pv_id": self.pv_id, "site": self.site, "volume_id": self.volume_id,
                "bound_claim_id": self.bound_claim_id}


@dataclass
class ReplicationCR:
    cr_id: str
    namespace: str
    member_volume_ids: list[str]
    desired_mode: str
    observed_group_id: str | None = None
    status: str = "pending"  # pending | configuring | bound | error
    reason: str = ""
    note: str = ""
    retryable: bool = True

    def to_record(self) -> dict:
        return {"cr_id": self.cr_id, "namespace": self.namespace,
                "member_volume_ids": list(self.member_volume_ids),
                "desired_mode": self.desired_mode,
                "observed_group_id": self.observed_group_id,
                "status": self.status, "reason": self.reason, "note": self.note}


class StoragePlugin:
    """The operator never touches engine internals except through this."""

    def __init__(self, engine: ReplicationEngine):
        self.engine = engine

    def configure_replication(self, member_volume_ids: list[str],
                              mode: str = GROUPED) -> str:
        if not member_volume_ids:
            raise InvalidArgument("storage-plugin: empty member list")
        try:
            return self.engine.create_group(member_volume_ids, mode=mode)
        except RepsimError as e:
            raise type(e)(f"storage-plugin: {e}") from e

    def create_snapshot_group(self, group_id: str) -> str:
        try:
            return self.engine.create_snapshot_group(group_id).snapshot_group_id
        except RepsimError as e:
            raise type(e)(f"storage-plugin: {e}") from e


class ControlPlane:
    def __init__(self, sim: Simulator, store: BlockStore, plugin: StoragePlugin,
                 block_size: int = 4096, default_mode: str = GROUPED):
        if default_mode not in MODES:
            raise InvalidArgument(f"unknown mode {default_mode!r}")
        self.sim = sim
        self.store = store
        self.plugin = plugin
        self.block_size = block_size
        self.default_mode = default_mode
        self.namespaces: dict[str, NamespaceRecord] = {}
        self.apps: dict[str, AppRecord] = {}
        self.claims: dict[str, VolumeClaim] = {}
        self.pvs: dict[str, PersistentVolume] = {}
        self.crs: dict[str, ReplicationCR] = {}  # one per namespace
        self._pv_counter = 0
        self._retry_scheduled = False
        self.reconcile_count = 0

    def attach(self) -> None:
        """Start the periodic reconcile tick (daemon: never blocks idle runs)."""
        def tick() -> None:
            self.reconcile()
            self.sim.schedule(RECONCILE_PERIOD_MS, tick, label="reconcile", daemon=True)
        self.sim.schedule(RECONCILE_PERIOD_MS, tick, label="reconcile", daemon=True)

    # -- platform records ------------------------------------------------------

    def create_namespace(self, name: str) -> NamespaceRecord:
        if not name:
            raise InvalidArgument("namespace name required")
        if name in self.namespaces:
            raise Conflict(f"namespace {name} exists")
        ns = NamespaceRecord(name=name)
        self.namespaces[name] = ns
        return ns

    def namespace(self, name: str) -> NamespaceRecord:
        ns = self.namespaces.get(name)
        if ns is None:
            raise NotFound(f"namespace {name}")
        return ns

    def create_app(self, namespace: str, name: str,
                   claim_specs: list[dict]) -> AppRecord:
        ns = self.namespace(namespace)
        app_id = f"{namespace}/{name}"
        if app_id in self.apps:
            raise Conflict(f"app {name} exists in namespace {namespace}")
        app = AppRecord(app_id=app_id, namespace=namespace, name=name)
        for spec in claim_specs:
            claim_name = spec["name"]
            claim_id = f"{app_id}/{claim_name}"
            if claim_id in self.claims:
                raise Conflict(f"claim {claim_name} exists in app {app_id}")
            self.claims[claim_id] = VolumeClaim(
                claim_id=claim_id, namespace=namespace, app_id=app_id,
                name=claim_name, requested_blocks=int(spec.get("blocks", 1024)))
            app.claim_ids.append(claim_id)
        self.apps[app_id] = app
        ns.app_ids.append(app_id)
        self.bind_claims()
        return app

    def app(self, app_id: str) -> AppRecord:
        app = self.apps.get(app_id)
        if app is None:
            raise NotFound(f"app {app_id}")
        return app

    def bind_claims(self) -> list[str]:
        """Bind every unbound claim to a freshly provisioned main-site PV."""
        bound = []
        for claim in self.claims.values():
            if claim.bound_pv_id is not None:
                continue
            volume_id = claim.claim_id.replace("/", "-")
            self.store.create_volume(MAIN, claim.requested_blocks, self.block_size,
                                     volume_id=volume_id)
            pv = self._new_pv(MAIN, volume_id, bound_claim_id=claim.claim_id)
            claim.bound_pv_id = pv.pv_id
            bound.append(claim.claim_id)
        return bound

    def _new_pv(self, site: str, volume_id: str, bound_claim_id: str | None = None) -> PersistentVolume:
        self._pv_counter += 1
        pv = PersistentVolume(pv_id=f"pv-{self._pv_counter}", site=site,
                              volume_id=volume_id, bound_claim_id=bound_claim_id)
        self.pvs[pv.pv_id] = pv
        return pv

    def list_pvs(self, site: str) -> list[dict]:
        if site not in SITES:
            raise InvalidArgument(f"unknown site {site!r}")
        return [pv.to_record() for pv in self.pvs.values() if pv.site == site]

    def app_volumes(self, app_id: str) -> list[str]:
        """Bound backing volumes of an app, in claim order."""
        app = self.app(app_id)
        vols = []
        for cid in app.claim_ids:
            claim = self.claims[cid]
            if claim.bound_pv_id is not None:
                vols.append(self.pvs[claim.bound_pv_id].volume_id)
        return vols

    def namespace_volumes(self, namespace: str) -> list[str]:
        ns = self.namespace(namespace)
        vols = []
        for app_id in ns.app_ids:
            vols.extend(self.app_volumes(app_id))
        return vols

    # -- tagging + reconciliation -----------------------------------------------

    def tag_namespace(self, namespace: str, key: str, value: str) -> dict:
        ns = self.namespace(namespace)
        ns.tags[key] = value
        self._kick_reconcile()
        return {"namespace": namespace, "key": key, "value": value}

    def untag_namespace(self, namespace: str, key: str) -> dict:
        ns = self.namespace(namespace)
        ns.tags.pop(key, None)
        self._kick_reconcile()
        return {"namespace": namespace, "key": key, "removed": True}

    def _kick_reconcile(self) -> None:
        self.sim.schedule(0.0, self.reconcile, label="reconcile-kick")

    def _trigger_mode(self, ns: NamespaceRecord) -> str | None:
        value = ns.tags.get(TRIGGER_KEY)
        if value not in TRIGGER_VALUES:
            return None
        return TRIGGER_VALUES[value] or self.default_mode

    def reconcile(self) -> list[str]:
        """One level-triggered convergence pass; returns the actions taken."""
        self.reconcile_count += 1
        actions: list[str] = []
        retry = False
        for name in sorted(self.namespaces):
            ns = self.namespaces[name]
            mode = self._trigger_mode(ns)
            cr = self.crs.get(name)
            if mode is None:
                if cr is not None and cr.note != "untagged: replication retained" \
                        and TRIGGER_KEY not in ns.tags:
                    cr.note = "untagged: replication retained"
                    actions.append(f"note {cr.cr_id}")
                continue
            volumes = self.namespace_volumes(name)
            if cr is None:
                if not volumes:
                    continue  # nothing to replicate yet
                cr = ReplicationCR(cr_id=f"cr-{name}", namespace=name,
                                   member_volume_ids=list(volumes), desired_mode=mode)
                self.crs[name] = cr
                actions.append(f"create {cr.cr_id}")
            if cr.status == "bound":
                if volumes != cr.member_volume_ids and cr.reason != "membership drift":
                    cr.status = "error"
                    cr.reason = "membership drift"
                    cr.retryable = False
                    actions.append(f"drift {cr.cr_id}")
                continue
            if cr.status == "error" and not cr.retryable:
                continue
            cr.status = "configuring"
            try:
                group_id = self.plugin.configure_replication(cr.member_volume_ids,
                                                             mode=cr.desired_mode)
            except RepsimError as e:
                cr.status = "error"
                cr.reason = str(e)
                cr.retryable = True
                actions.append(f"error {cr.cr_id}")
                retry = True
                continue
            cr.observed_group_id = group_id
            cr.status = "bound"
            cr.reason = ""
            actions.append(f"bind {cr.cr_id} {group_id}")
            for vid in cr.member_volume_ids:
                self._new_pv("backup", vid)
                actions.append(f"backup-pv {vid}")
        if retry and not self._retry_scheduled:
            self._retry_scheduled = True

            def retry_tick() -> None:
                self._retry_scheduled = False
                self.reconcile()

            self.sim.schedule(RECONCILE_PERIOD_MS, retry_tick, label="reconcile-retry")
        if actions:
            self.sim.trace("reconcile", ";".join(actions))
        return actions

    def cr_for(self, namespace: str) -> ReplicationCR | None:
        return self.crs.get(namespace)
