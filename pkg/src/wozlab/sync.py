"""Server-authoritative scene replication.

One :class:`SessionSync` per session owns the authoritative state and the
total order of accepted commands. Clients mirror it two ways:

* ``local_render`` — the client holds a full :class:`Replica` and applies
  each Delta locally, verifying the post-application digest byte-for-byte.
* ``remote_render`` — the client holds a :class:`RemoteView`; every Delta
  (and full-state resync) carries a server-rendered snapshot which the
  client displays verbatim.

Either way, divergence is detected within one step (gap in version numbers
or digest mismatch) and repaired by an explicit resync round trip. This
module is transport-free; the gateway moves Deltas and resync messages.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from wozlab.scene.commands import SceneCommand, apply_command
from wozlab.scene.model import Catalog, SceneState
from wozlab.scene.render import render_snapshot
from wozlab.scene.scenario import Scenario
from wozlab.scene.serialize import digest

TOPOLOGIES = ("local_render", "remote_render")

# A replica this far behind gets a full state instead of a delta batch.
DEFAULT_FULL_STATE_GAP = 64
# How many recent deltas the server keeps for incremental resync.
DEFAULT_RETENTION = 1024


class VersionAhead(Exception):
    """Client claims a version the server never issued."""

    def __init__(self, claimed: int, authoritative: int):
        super().__init__(
            f"claimed version {claimed} is ahead of authoritative {authoritative}"
        )
        self.claimed = claimed
        self.authoritative = authoritative


@dataclass(frozen=True)
class Delta:
    """One accepted command, as broadcast to replicas."""

    session_id: str
    version: int
    command: SceneCommand
    post_digest: bytes
    snapshot: str | None = None


@dataclass
class ReplicaStatus:
    participant_id: str
    mode: str
    acked_version: int = 0


@dataclass(frozen=True)
class ResyncPlan:
    """Server's answer to a resync request: a delta batch or a full state."""

    kind: str  # "batch" | "full"
    deltas: tuple[Delta, ...] = ()
    state: SceneState | None = None
    state_digest: bytes | None = None
    snapshot: str | None = None


class SessionSync:
    """Authoritative state plus delta history for one session.

    Not thread-safe by itself; the session coordinator serializes access
    (single-writer discipline).
    """

    def __init__(
        self,
        session_id: str,
        scenario: Scenario,
        *,
        topology: str = "local_render",
        retention: int = DEFAULT_RETENTION,
        full_state_gap: int = DEFAULT_FULL_STATE_GAP,
    ):
        if topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {topology!r}")
        self.session_id = session_id
        self.topology = topology
        self.catalog = scenario.catalog
        self.permissions = scenario.permissions
        self.full_state_gap = full_state_gap
        self._state = scenario.initial_state
        self._buffer: deque[Delta] = deque(maxlen=retention)
        self.replicas: dict[str, ReplicaStatus] = {}

    @property
    def state(self) -> SceneState:
        return self._state

    @property
    def version(self) -> int:
        return self._state.version

    @property
    def state_digest(self) -> bytes:
        return digest(self._state)

    def attach_replica(self, participant_id: str) -> ReplicaStatus:
        status = ReplicaStatus(participant_id=participant_id, mode=self.topology)
        self.replicas[participant_id] = status
        return status

    def _snapshot_if_remote(self, state: SceneState) -> str | None:
        if self.topology == "remote_render":
            return render_snapshot(state, self.catalog)
        return None

    def submit(self, command: SceneCommand) -> Delta:
        """Apply one command to the authoritative state.

        Scene errors (permissions, bounds, ...) propagate to the caller,
        which routes them to the issuer only; state is untouched then.
        """
        new_state = apply_command(self._state, command, self.catalog, self.permissions)
        delta = Delta(
            session_id=self.session_id,
            version=new_state.version,
            command=command,
            post_digest=digest(new_state),
            snapshot=self._snapshot_if_remote(new_state),
        )
        self._state = new_state
        self._buffer.append(delta)
        return delta

    def ack(self, participant_id: str, version: int) -> None:
        if version > self._state.version:
            raise VersionAhead(version, self._state.version)
        status = self.replicas.get(participant_id)
        if status is not None and version > status.acked_version:
            status.acked_version = version

    def deltas_since(self, last_good_version: int) -> tuple[Delta, ...] | None:
        """Deltas (last_good, current], or None if they left the buffer."""
        if last_good_version >= self._state.version:
            return ()
        wanted = self._state.version - last_good_version
        if wanted > len(self._buffer):
            return None
        run = list(self._buffer)[-wanted:]
        if run[0].version != last_good_version + 1:
            return None
        return tuple(run)

    def full_plan(self) -> ResyncPlan:
        """Unconditional full-state recovery at the authoritative version."""
        return ResyncPlan(
            kind="full",
            state=self._state,
            state_digest=digest(self._state),
            snapshot=self._snapshot_if_remote(self._state),
        )

    def resync(self, last_good_version: int) -> ResyncPlan:
        """Build a recovery plan for a replica stuck at ``last_good_version``."""
        if last_good_version > self._state.version:
            raise VersionAhead(last_good_version, self._state.version)
        gap = self._state.version - last_good_version
        deltas = self.deltas_since(last_good_version) if gap <= self.full_state_gap else None
        if deltas is None:
            return self.full_plan()
        return ResyncPlan(kind="batch", deltas=deltas)


@dataclass
class Replica:
    """Client-side authoritative mirror for local_render topology."""

    state: SceneState
    catalog: Catalog
    permissions: dict[str, frozenset[str]] | None = None

    @property
    def version(self) -> int:
        return self.state.version

    @property
    def state_digest(self) -> bytes:
        return digest(self.state)

    def verify_and_apply(self, delta: Delta) -> bool:
        """Apply one delta. True means the replica is current; False means
        the caller must request a resync from ``self.version``.

        Stale duplicates (version <= current) are ignored as already seen.
        """
        if delta.version <= self.state.version:
            return True
        if delta.version != self.state.version + 1:
            return False
        try:
            candidate = apply_command(self.state, delta.command, self.catalog, self.permissions)
        except Exception:
            return False
        if digest(candidate) != delta.post_digest:
            return False
        self.state = candidate
        return True

    def load_full_state(self, state: SceneState, expected_digest: bytes | None = None) -> None:
        if expected_digest is not None and digest(state) != expected_digest:
            raise ValueError("full state does not match its announced digest")
        self.state = state

    def apply_batch(self, deltas: tuple[Delta, ...]) -> bool:
        """Apply a resync batch; idempotent over already-seen prefixes."""
        for delta in deltas:
            if not self.verify_and_apply(delta):
                return False
        return True


@dataclass
class RemoteView:
    """Client-side view for remote_render topology: snapshot in, pixels out."""

    version: int = 0
    snapshot: str | None = None
    last_digest: bytes | None = None

    def verify_and_apply(self, delta: Delta) -> bool:
        if delta.version <= self.version:
            return True
        if delta.version != self.version + 1 or delta.snapshot is None:
            return False
        self.version = delta.version
        self.snapshot = delta.snapshot
        self.last_digest = delta.post_digest
        return True

    def load_full(self, version: int, snapshot: str | None, state_digest: bytes | None) -> None:
        self.version = version
        self.snapshot = snapshot
        self.last_digest = state_digest
