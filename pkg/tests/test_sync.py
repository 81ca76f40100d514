"""Replication: total order, digest verification, resync recovery, convergence."""
from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wozlab.scene.commands import (
    FocusItem,
    Navigate,
    RotateItem,
    SetAttribute,
    ZoomItem,
    apply_command,
)
from wozlab.scene.errors import PermissionDenied, SceneError
from wozlab.scene.render import render_snapshot
from wozlab.scene.serialize import digest
from wozlab.sync import (
    Delta,
    RemoteView,
    Replica,
    ResyncPlan,
    SessionSync,
    VersionAhead,
)


def make_sync(scenario, **kw):
    return SessionSync("s0", scenario, **kw)


def make_replica(scenario):
    return Replica(scenario.initial_state, scenario.catalog, scenario.permissions)


# Commands that always succeed on the shopping scenario, any number of times.
SAFE_OPS = [
    RotateItem("o0", 90, "wizard"),
    RotateItem("o1", 15, "wizard"),
    RotateItem("o2", 345, "wizard"),
    FocusItem("o1", "wizard"),
    FocusItem("o2", "wizard"),
    SetAttribute("o0", "color", "red", "wizard"),
    SetAttribute("o0", "color", "blue", "wizard"),
    SetAttribute("o2", "pattern", "dotted", "wizard"),
    Navigate(0, -1, "user"),
    Navigate(0, 1, "user"),
]


class TestSubmit:
    def test_accepted_command_advances_version_and_buffers_delta(self, shopping):
        sync = make_sync(shopping)
        delta = sync.submit(Navigate(0, -1, "user"))
        assert delta.version == 1 == sync.version
        assert delta.session_id == "s0"
        assert delta.post_digest == sync.state_digest
        assert delta.snapshot is None  # local_render ships no pixels

    def test_rejection_leaves_digest_unchanged(self, shopping):
        sync = make_sync(shopping)
        before = sync.state_digest
        with pytest.raises(PermissionDenied):
            sync.submit(SetAttribute("o0", "color", "red", "user"))
        assert sync.state_digest == before
        assert sync.version == 0

    def test_interleaved_submissions_match_sequential_oracle(self, shopping):
        sync = make_sync(shopping)
        script = [SAFE_OPS[i % len(SAFE_OPS)] for i in range(23)]
        for cmd in script:
            sync.submit(cmd)
        oracle = shopping.initial_state
        for cmd in script:
            oracle = apply_command(oracle, cmd, shopping.catalog, shopping.permissions)
        assert sync.state_digest == digest(oracle)
        assert sync.version == len(script)

    def test_remote_render_attaches_matching_snapshot(self, shopping):
        sync = make_sync(shopping, topology="remote_render")
        delta = sync.submit(RotateItem("o0", 90, "wizard"))
        assert delta.snapshot == render_snapshot(sync.state, shopping.catalog)

    def test_unknown_topology_refused(self, shopping):
        with pytest.raises(ValueError):
            make_sync(shopping, topology="holograms")


class TestReplicaApply:
    def test_in_order_deltas_converge(self, shopping):
        sync, replica = make_sync(shopping), make_replica(shopping)
        for cmd in SAFE_OPS:
            assert replica.verify_and_apply(sync.submit(cmd))
        assert replica.state_digest == sync.state_digest

    def test_gap_refused_without_state_change(self, shopping):
        sync, replica = make_sync(shopping), make_replica(shopping)
        sync.submit(SAFE_OPS[0])
        skipped = sync.submit(SAFE_OPS[1])
        assert not replica.verify_and_apply(skipped)  # version 2 onto replica 0
        assert replica.version == 0
        assert replica.state_digest == digest(shopping.initial_state)

    def test_corrupted_command_digest_mismatch_refused(self, shopping):
        sync, replica = make_sync(shopping), make_replica(shopping)
        delta = sync.submit(RotateItem("o0", 90, "wizard"))
        forged = dataclasses.replace(delta, command=RotateItem("o0", 180, "wizard"))
        assert not replica.verify_and_apply(forged)
        assert replica.version == 0
        assert replica.verify_and_apply(delta)  # the honest delta still lands

    def test_stale_duplicate_is_ignored(self, shopping):
        sync, replica = make_sync(shopping), make_replica(shopping)
        delta = sync.submit(SAFE_OPS[0])
        assert replica.verify_and_apply(delta)
        assert replica.verify_and_apply(delta)  # redelivery is harmless
        assert replica.version == 1

    def test_unreplayable_delta_refused(self, shopping):
        replica = make_replica(shopping)
        bogus = Delta("s0", 1, RotateItem("ghost", 90, "wizard"), b"\x00" * 32)
        assert not replica.verify_and_apply(bogus)
        assert replica.version == 0


class TestResync:
    def test_current_replica_gets_empty_batch(self, shopping):
        sync = make_sync(shopping)
        sync.submit(SAFE_OPS[0])
        plan = sync.resync(1)
        assert plan == ResyncPlan(kind="batch", deltas=())

    def test_gap_of_three_yields_chained_batch(self, shopping):
        sync, replica = make_sync(shopping), make_replica(shopping)
        deltas = [sync.submit(cmd) for cmd in SAFE_OPS[:5]]
        assert replica.apply_batch(tuple(deltas[:2]))
        plan = sync.resync(replica.version)
        assert plan.kind == "batch"
        assert [d.version for d in plan.deltas] == [3, 4, 5]
        assert replica.apply_batch(plan.deltas)
        assert replica.state_digest == sync.state_digest

    def test_version_ahead_rejected(self, shopping):
        sync = make_sync(shopping)
        sync.submit(SAFE_OPS[0])
        with pytest.raises(VersionAhead):
            sync.resync(10)

    def test_wide_gap_forces_full_state(self, shopping):
        sync = make_sync(shopping, full_state_gap=4)
        for i in range(6):
            sync.submit(SAFE_OPS[i % len(SAFE_OPS)])
        plan = sync.resync(0)
        assert plan.kind == "full"
        assert plan.state is sync.state
        assert plan.state_digest == sync.state_digest
        assert plan.snapshot is None
        replica = make_replica(shopping)
        replica.load_full_state(plan.state, plan.state_digest)
        assert replica.state_digest == sync.state_digest

    def test_evicted_history_forces_full_state(self, shopping):
        sync = make_sync(shopping, retention=3, full_state_gap=64)
        for i in range(8):
            sync.submit(SAFE_OPS[i % len(SAFE_OPS)])
        assert sync.deltas_since(2) is None  # deltas 3..5 already evicted
        assert sync.resync(2).kind == "full"
        assert sync.resync(5).kind == "batch"  # still inside the window

    def test_resync_is_idempotent(self, shopping):
        sync, replica = make_sync(shopping), make_replica(shopping)
        for cmd in SAFE_OPS[:6]:
            sync.submit(cmd)
        for _ in range(2):
            plan = sync.resync(replica.version)
            assert replica.apply_batch(plan.deltas)
            assert replica.state_digest == sync.state_digest

    def test_full_state_resync_in_remote_topology_carries_snapshot(self, shopping):
        sync = make_sync(shopping, topology="remote_render", full_state_gap=1)
        sync.submit(SAFE_OPS[0])
        sync.submit(SAFE_OPS[1])
        plan = sync.resync(0)
        assert plan.kind == "full"
        assert plan.snapshot == render_snapshot(sync.state, shopping.catalog)


class TestRemoteView:
    def test_follows_snapshot_stream(self, shopping):
        sync, view = make_sync(shopping, topology="remote_render"), RemoteView()
        for cmd in SAFE_OPS[:4]:
            assert view.verify_and_apply(sync.submit(cmd))
        assert view.version == 4
        assert view.snapshot == render_snapshot(sync.state, shopping.catalog)
        assert view.last_digest == sync.state_digest

    def test_gap_triggers_resync_path(self, shopping):
        sync, view = make_sync(shopping, topology="remote_render"), RemoteView()
        sync.submit(SAFE_OPS[0])
        second = sync.submit(SAFE_OPS[1])
        assert not view.verify_and_apply(second)
        plan = sync.resync(view.version)
        view.load_full(sync.version, plan.snapshot, plan.state_digest) if plan.kind == "full" else [
            view.verify_and_apply(d) for d in plan.deltas
        ]
        assert view.version == sync.version


class TestReplicaStatus:
    def test_ack_advances_monotonically(self, shopping):
        sync = make_sync(shopping)
        sync.attach_replica("p-u")
        sync.submit(SAFE_OPS[0])
        sync.submit(SAFE_OPS[1])
        sync.ack("p-u", 2)
        sync.ack("p-u", 1)  # late ack does not regress
        assert sync.replicas["p-u"].acked_version == 2
        assert sync.replicas["p-u"].mode == "local_render"

    def test_ack_beyond_authoritative_rejected(self, shopping):
        sync = make_sync(shopping)
        sync.attach_replica("p-u")
        with pytest.raises(VersionAhead):
            sync.ack("p-u", 1)


# Fault model: each delta may be delivered or dropped per replica; a replica
# that noticed a gap asks for resync at arbitrary later points. Whatever the
# schedule, quiescence plus one final resync must converge both replicas.
@settings(max_examples=60, deadline=None)
@given(
    ops=st.lists(st.integers(min_value=0, max_value=len(SAFE_OPS) - 1), min_size=1, max_size=40),
    drop_a=st.sets(st.integers(min_value=1, max_value=40)),
    drop_b=st.sets(st.integers(min_value=1, max_value=40)),
    resync_every=st.integers(min_value=1, max_value=9),
)
def test_property_convergence_under_drops_and_resyncs(shopping, ops, drop_a, drop_b, resync_every):
    sync = make_sync(shopping, full_state_gap=8)
    replicas = {"a": make_replica(shopping), "b": make_replica(shopping)}
    drops = {"a": drop_a, "b": drop_b}
    for step, op_index in enumerate(ops, start=1):
        try:
            delta = sync.submit(SAFE_OPS[op_index])
        except SceneError:
            continue  # e.g. Navigate off-grid: no delta, nothing to replicate
        for name, replica in replicas.items():
            if delta.version in drops[name]:
                continue  # lost on the wire
            replica.verify_and_apply(delta)
        if step % resync_every == 0:
            for replica in replicas.values():
                plan = sync.resync(replica.version)
                if plan.kind == "full":
                    replica.load_full_state(plan.state, plan.state_digest)
                else:
                    replica.apply_batch(plan.deltas)
    for replica in replicas.values():
        plan = sync.resync(replica.version)
        if plan.kind == "full":
            replica.load_full_state(plan.state, plan.state_digest)
        else:
            replica.apply_batch(plan.deltas)
        assert replica.state_digest == sync.state_digest
        assert replica.version == sync.version
