"""Agent pipeline: catalog, setup/locks, dispatch, managers, telemetry, alarms."""

import itertools

import pytest

from hexsim import e2lite
from hexsim.agent import RIC, SMO, Agent, AgentConfig
from hexsim.clocks import VirtualClock
from hexsim.e2lite import E2LiteFrame, MsgType
from hexsim.errors import MalformedConfig
from hexsim.pml import FsApi, Pml
from hexsim.ric_harness import FS_FUNCTION_DOC, SimulatedPeer, connect_inproc
from hexsim.slice_model import (
    Bearer,
    ChangeTrigger,
    SliceRegistry,
    SliceState,
    UEContext,
)

T = ChangeTrigger("test", "unit")


def _raise_on_send(data: bytes) -> None:
    raise OSError("link down")


class Stack:
    def __init__(self, config=None, doc=None, n_slices=2):
        self.clock = VirtualClock()
        self.registry = SliceRegistry(106)
        self.pml = Pml(clock=self.clock)
        self.fs = FsApi(self.pml, self.registry)
        self.agent = Agent(self.registry, self.pml, self.fs, config or AgentConfig(),
                           clock=self.clock)
        self.agent.load_configuration(doc or FS_FUNCTION_DOC)
        for sid in range(1, n_slices + 1):
            self.registry.create_slice(sid, SliceState.SHARED)
            self.registry.add_ue(UEContext(ue_id=sid * 10))
            self.registry.add_drb(sid, Bearer(drb_id=sid * 10, ue_id=sid * 10,
                                              slice_id=sid), T)
        self.registry.publish()

    def attach(self, peer_id="ric-1", kind=RIC, activate="all"):
        peer = SimulatedPeer(peer_id, kind, activate=activate)
        connect_inproc(self.agent, peer, f"link-{peer_id}")
        self.settle()
        return peer

    def settle(self, ms=1):
        for _ in range(ms):
            self.agent.pump(self.clock.now_ns())
            self.pml.tti_boundary(self.registry)
            self.agent.emit_telemetry(self.clock.now_ns())
            self.clock.advance_ms(1)

    def run_ms(self, ms):
        self.settle(ms)


class TestConfiguration:
    def test_function_with_registered_plugin_is_available(self):
        stack = Stack()
        entry = stack.agent.repository.catalog[e2lite.FS_RAN_FUNCTION_ID]
        assert entry.available

    def test_function_with_missing_plugin_is_unavailable_with_reason(self):
        doc = {"functions": [
            {"function_id": 9, "name": "x", "kind": "ran",
             "required_pml_plugins": ["nonexistent"]},
        ]}
        stack = Stack(doc=doc)
        entry = stack.agent.repository.catalog[9]
        assert not entry.available
        assert "missing_plugin" in entry.reason

    def test_empty_doc_gives_empty_catalog(self):
        stack = Stack(doc={"functions": []})
        assert stack.agent.repository.catalog == {}

    def test_malformed_doc_rejected(self):
        stack = Stack()
        with pytest.raises(MalformedConfig):
            stack.agent.load_configuration({"functions": [{"name": "no-id"}]})
        with pytest.raises(MalformedConfig):
            stack.agent.load_configuration({"functions": "nope"})

    def test_settings_applied_from_doc(self):
        doc = dict(FS_FUNCTION_DOC)
        doc.update({"queue_depth": 7, "lockout_window_ms": 55.0, "manager_instances": 3})
        stack = Stack(doc=doc)
        assert stack.agent.config.queue_depth == 7
        assert stack.pml.lockout.window_ms == 55.0
        assert stack.agent.config.manager_instances == 3


class TestSetupAndLocks:
    def test_setup_lists_available_functions_and_activates(self):
        stack = Stack()
        ric = stack.attach()
        assert [f["function_id"] for f in ric.available_functions] == [1]
        assert stack.agent.activation("ric-1") == {1}
        ctx = stack.agent.repository.ric_contexts["ric-1"]
        assert "slice/" in ctx.locks

    def test_second_ric_is_refused_locked_function(self):
        stack = Stack()
        stack.attach("ric-a")
        stack.attach("ric-b")
        assert stack.agent.activation("ric-b") == set()
        assert "resource_locked" in stack.agent.repository.ric_contexts["ric-b"].refused[1]

    def test_disconnect_releases_locks_for_the_next_ric(self):
        stack = Stack()
        stack.attach("ric-a")
        stack.agent.detach_link("link-ric-a")
        stack.attach("ric-b")
        assert stack.agent.activation("ric-b") == {1}

    def test_subscriptions_dropped_on_disconnect(self):
        stack = Stack()
        ric = stack.attach("ric-a")
        ric.subscribe(1, "slice_context", slice_ids=[1],
                      trigger={"kind": "periodic", "period_ms": 10})
        stack.settle(2)
        stack.agent.detach_link("link-ric-a")
        before = len(ric.indications)
        stack.run_ms(50)
        assert len(ric.indications) == before


class TestDispatch:
    def test_unknown_type_yields_failure_with_cause(self):
        stack = Stack()
        ric = stack.attach()
        ric._emit(E2LiteFrame(177, 42, {}))
        stack.settle()
        assert ric.responses[42].msg_type == MsgType.CONTROL_FAILURE
        assert ric.responses[42].payload["cause"] == "unknown_type"

    def test_inbound_indication_is_invalid_direction(self):
        stack = Stack()
        ric = stack.attach()
        ric._emit(E2LiteFrame(MsgType.INDICATION, 43, {}))
        stack.settle()
        assert ric.responses[43].payload["cause"] == "invalid_direction"

    def test_codec_garbage_answers_failure_frame(self):
        stack = Stack()
        ric = stack.attach()
        stack.agent.receive("link-ric-1", b"GARBAGE_BYTES_")
        assert any(f.payload.get("cause") == "codec"
                   for f in ric.responses.values()) or ric.responses == {}
        # the reader keeps the bytes buffered; a failure frame was emitted iff
        # the header was undecodable
        assert stack.agent.failures_by_cause.get("error:BadMagic", 0) >= 1

    def test_per_ric_control_order_is_preserved(self):
        stack = Stack()
        ric = stack.attach()
        for sp in (2, 3, 4):
            ric.control_slice(1, {"slice_id": 1, "shared_priority": sp})
        stack.settle()
        assert stack.registry.get_slice(1).rrc.shared_priority == 4
        records = stack.registry.records_since(1, 0)
        priorities = [
            o.after["rrc"]["shared_priority"]
            for r in records for o in r.outcomes
            if isinstance(o.after, dict) and "rrc" in o.after
        ]
        assert priorities == [2, 3, 4]


class TestControlPath:
    def test_slice_config_acked_and_applied_next_boundary(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.control_slice(1, {"slice_id": 2, "state": "dedicated",
                                     "dedicated_rb": 85})
        assert stack.registry.get_slice(2).state is SliceState.SHARED
        stack.settle()
        kind, _ = ric.control_results[corr]
        assert kind == "ack"
        assert stack.registry.get_slice(2).state is SliceState.DEDICATED
        assert stack.agent.metrics.executed == 1

    def test_ue_config_changes_bearer_priority(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.control_ue(1, {"drb_id": 20, "bearer_priority": 5})
        stack.settle()
        assert ric.control_results[corr][0] == "ack"
        assert stack.registry.get_bearer(20).bearer_priority == 5

    def test_not_activated_function_fails(self):
        stack = Stack()
        ric = stack.attach(activate=[])
        corr = ric.control_slice(1, {"slice_id": 1, "shared_priority": 2})
        stack.settle()
        kind, payload = ric.control_results[corr]
        assert (kind, payload["cause"]) == ("failure", "not_activated")

    def test_malformed_params_fail_and_count(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.control_slice(1, {"slice_id": 2, "dedicated_rb": -1})
        stack.settle()
        kind, payload = ric.control_results[corr]
        assert (kind, payload["cause"]) == ("failure", "schema_violation")
        assert stack.agent.metrics.failed == 1
        assert stack.agent.metrics.received == 1

    def test_non_holder_ric_gets_resource_locked(self):
        doc = {"functions": [
            {"function_id": 1, "name": "fs1", "kind": "ran",
             "required_pml_plugins": ["fs"], "resources": ["slice/1"]},
            {"function_id": 2, "name": "fs2", "kind": "ran",
             "required_pml_plugins": ["fs"], "resources": ["slice/2"]},
        ]}
        stack = Stack(doc=doc)
        stack.attach("ric-a", activate=[1])
        ric_b = stack.attach("ric-b", activate=[2])
        assert stack.agent.activation("ric-b") == {2}
        corr = ric_b.control_slice(2, {"slice_id": 1, "shared_priority": 3})
        stack.settle()
        kind, payload = ric_b.control_results[corr]
        assert (kind, payload["cause"]) == ("failure", "resource_locked")

    def test_exclusivity_over_all_small_interleavings(self):
        """No interleaving of two controllers' ops flips a locked resource."""
        doc = {"functions": [
            {"function_id": 1, "name": "fs1", "kind": "ran",
             "required_pml_plugins": ["fs"], "resources": ["slice/1"]},
            {"function_id": 2, "name": "fs2", "kind": "ran",
             "required_pml_plugins": ["fs"], "resources": ["slice/2"]},
        ]}
        a_ops = [3, 4]   # shared_priority values controller A writes to slice 1
        b_ops = [7, 8]   # values controller B attempts on the same slice
        for order in set(itertools.permutations(["a", "a", "b", "b"])):
            stack = Stack(doc=doc)
            ric_a = stack.attach("ric-a", activate=[1])
            ric_b = stack.attach("ric-b", activate=[2])
            ita, itb = iter(a_ops), iter(b_ops)
            for who in order:
                if who == "a":
                    ric_a.control_slice(1, {"slice_id": 1, "shared_priority": next(ita)})
                else:
                    ric_b.control_slice(2, {"slice_id": 1, "shared_priority": next(itb)})
                stack.settle()
            assert stack.registry.get_slice(1).rrc.shared_priority in a_ops
            assert all(k == "failure" for k, _ in ric_b.control_results.values())

    def test_exactly_one_response_per_request(self):
        stack = Stack()
        ric = stack.attach()
        corrs = []
        corrs.append(ric.control_slice(1, {"slice_id": 1, "shared_priority": 2}))
        corrs.append(ric.control_slice(1, {"slice_id": 9, "shared_priority": 2}))  # fails
        corrs.append(ric.query(1, "slice_context", slice_ids=[1]))
        corrs.append(ric.subscribe(1, "slice_context", slice_ids=[1]))
        stack.settle(2)
        for corr in corrs:
            assert corr in ric.responses
        assert len(set(corrs)) == len(corrs)

    def test_queue_overflow_answers_overloaded(self):
        stack = Stack(config=AgentConfig(queue_depth=4))
        ric = stack.attach()
        corrs = [ric.control_slice(1, {"slice_id": 1, "shared_priority": 2})
                 for _ in range(10)]
        stack.settle()
        causes = [ric.control_results[c] for c in corrs]
        overloaded = [1 for kind, p in causes
                      if kind == "failure" and p["cause"] == "overloaded"]
        assert len(overloaded) == 6
        m = stack.agent.metrics
        assert m.received == 10
        assert m.executed + m.failed == m.received


class TestSubscriptionsAndQueries:
    def test_periodic_subscription_delivers_ten_reports_in_ten_seconds(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.subscribe(1, "slice_context", slice_ids=[1, 2],
                             trigger={"kind": "periodic", "period_ms": 1000})
        stack.settle()
        assert ric.responses[corr].msg_type == MsgType.SUBSCRIPTION_RESPONSE
        stack.run_ms(10_000)
        assert abs(len(ric.indications) - 10) <= 1
        report = ric.indications[0].payload["report"]
        assert [s["slice_id"] for s in report["slices"]] == [1, 2]

    def test_event_subscription_fires_per_context_change(self):
        stack = Stack()
        ric = stack.attach()
        ric.subscribe(1, "slice_context", slice_ids=[1],
                      trigger={"kind": "event", "event": "context_change"})
        stack.settle(2)
        ric.drain_indications()  # discard anything from setup history
        for k in range(3):
            stack.registry.update_slice(1, T, hu_associations={f"hu{k}"})
            stack.settle()
        changes = [f for f in ric.indications if f.payload["service"] == "slice_context"]
        assert len(changes) == 3
        assert changes[0].payload["report"]["records"][0]["outcomes"]

    def test_subscription_to_unknown_slice_fails(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.subscribe(1, "slice_context", slice_ids=[42])
        stack.settle(2)
        assert ric.responses[corr].msg_type == MsgType.CONTROL_FAILURE
        assert ric.responses[corr].payload["cause"] == "unknown_id"

    def test_query_returns_one_shot_report(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.query(1, "ue_context", ue_ids=[10])
        stack.settle()
        report = ric.responses[corr].payload["report"]
        assert report["ues"][0]["ue_id"] == 10

    def test_query_matches_next_periodic_indication_when_frozen(self):
        stack = Stack()
        ric = stack.attach()
        ric.subscribe(1, "slice_context", slice_ids=[1],
                      trigger={"kind": "periodic", "period_ms": 5})
        stack.settle(2)
        ric.drain_indications()
        corr = ric.query(1, "slice_context", slice_ids=[1])
        stack.run_ms(6)
        query_report = ric.responses[corr].payload["report"]
        indication = ric.indications[0].payload["report"]
        assert query_report == indication

    def test_empty_targets_give_empty_report(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.query(1, "slice_context", slice_ids=[])
        stack.settle()
        assert ric.responses[corr].payload["report"] == {"slices": [], "ues": []}


class TestOamPath:
    def test_edit_config_commits_and_changes_lockout_behavior(self):
        stack = Stack()
        ric = stack.attach()
        smo = stack.attach("smo-1", kind=SMO)
        corr = smo.edit_config({"lockout_window_ms": 50})
        stack.settle()
        assert smo.responses[corr].msg_type == MsgType.CONFIG_ACK
        assert stack.agent.repository.ran_state["config"]["lockout_window_ms"] == 50
        assert stack.pml.lockout.window_ms == 50
        # cross-entity rewrite not allowed inside 50 ms but fine after it
        stack.fs.fs_control_request("x", {"slices": [{"slice_id": 1, "shared_priority": 2}]})
        stack.clock.advance_ms(60)
        late = stack.fs.fs_control_request("y", {"slices": [{"slice_id": 1, "shared_priority": 3}]})
        stack.settle()
        assert late.error is None

    def test_malformed_edit_config_leaves_repository_unchanged(self):
        stack = Stack()
        smo = stack.attach("smo-1", kind=SMO)
        corr = smo.edit_config({"warp_factor": 9})
        stack.settle()
        assert smo.responses[corr].msg_type == MsgType.CONTROL_FAILURE
        assert "warp_factor" not in stack.agent.repository.ran_state["config"]

    def test_edit_config_from_ric_link_is_rejected(self):
        stack = Stack()
        ric = stack.attach()
        corr = ric.edit_config({"lockout_window_ms": 10})
        stack.settle()
        assert ric.responses[corr].msg_type == MsgType.CONTROL_FAILURE

    def test_utilization_alarm_reaches_all_smos(self):
        stack = Stack()
        smo1 = stack.attach("smo-1", kind=SMO)
        smo2 = stack.attach("smo-2", kind=SMO)
        stack.agent.report_hu_utilization("hu4", 0.95)
        assert len(smo1.alarms) == 1 and len(smo2.alarms) == 1
        assert smo1.alarms[0].payload["condition"] == "hu_utilization"
        stack.agent.report_hu_utilization("hu4", 0.5)
        assert len(smo1.alarms) == 1

    def test_queue_overflow_raises_alarm(self):
        stack = Stack(config=AgentConfig(queue_depth=2))
        smo = stack.attach("smo-1", kind=SMO)
        ric = stack.attach()
        for _ in range(5):
            ric.control_slice(1, {"slice_id": 1, "shared_priority": 2})
        assert any(a.payload["condition"] == "queue_overflow" for a in smo.alarms)

    def test_indication_delivery_failure_raises_alarm(self):
        stack = Stack()
        smo = stack.attach("smo-1", kind=SMO)
        ric = stack.attach()
        ric.subscribe(1, "slice_context", slice_ids=[1],
                      trigger={"kind": "periodic", "period_ms": 5})
        stack.settle(2)
        # break the controller's link underneath the subscription
        stack.agent._links["link-ric-1"].send = _raise_on_send
        stack.run_ms(10)
        sub = next(iter(stack.agent.repository.ric_contexts["ric-1"].subscriptions.values()))
        assert sub.failed >= 1
        assert any(a.payload["condition"] == "subscription_delivery_failure"
                   for a in smo.alarms)

    def test_expected_plugin_list_is_recorded(self):
        doc = dict(FS_FUNCTION_DOC, plugins=["fs", "ghost"])
        stack = Stack(doc=doc)
        status = stack.agent.repository.ran_state["operational"]["plugins"]
        assert status == {"fs": True, "ghost": False}


class TestPipelineMetricsInvariant:
    def test_timestamps_are_ordered_per_executed_message(self):
        stack = Stack()
        ric = stack.attach()
        for sp in (2, 3, 4, 5):
            ric.control_slice(1, {"slice_id": 1, "shared_priority": sp})
        stack.settle()
        with stack.agent.metrics.lock:
            records = list(stack.agent.metrics.records)
        assert records
        for r in records:
            assert r.receive_ns <= r.dispatch_ns <= r.invoke_ns
