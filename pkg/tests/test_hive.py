from __future__ import annotations

import time

import pytest

from swarmcheck.codec import decode, to_swarm
from swarmcheck.counting import count_traces
from swarmcheck.hive import HiveState
from swarmcheck.lts import Label, Lts, Network, SyncRule
from swarmcheck.ranges import TraceRangeList
from swarmcheck.search import FeedbackVector, RestrictionSet, run_iss

from conftest import L, chain_lts, connect, hive_session, player_lts, single_state_lts


def player_state(**kw) -> HiveState:
    net = Network([player_lts(scramble=False), single_state_lts()])
    return HiveState(count_traces(player_lts()), net, **kw)


def gated_player_state(**kw) -> HiveState:
    """recv_C1_2 requires a synchronisation its peer never offers: the
    partner label sits on an unreachable state."""
    peer = Lts(2, 1, [(0, L("gp_x"), 1)])
    net = Network(
        [player_lts(scramble=False), peer],
        [SyncRule(L("recv_C1_2"), L("gp_x"), L("gp_sync2"))],
    )
    return HiveState(count_traces(player_lts()), net, **kw)


class TestSelectTrace:
    def test_fresh_ledger_issues_lease(self):
        state = player_state(seed=5)
        kind, swarm = state.select_trace("w0")
        assert kind == "trace"
        assert 0 <= swarm.trace_id < 14
        assert swarm.trace_id in state.leases

    def test_complete_ledger_terminates(self):
        ledger = TraceRangeList(14)
        ledger.add(0, 14)
        state = player_state(ledger=ledger)
        assert state.select_trace("w0") == ("terminate", "complete")

    def test_all_leased_means_retry(self):
        state = player_state(seed=1)
        for _ in range(14):
            kind, _payload = state.select_trace("w0")
            assert kind == "trace"
        kind, millis = state.select_trace("w1")
        assert kind == "retry"
        assert millis > 0

    def test_expired_lease_reissued(self):
        state = player_state(seed=2, lease_timeout=0.01)
        kind, first = state.select_trace("w0")
        assert kind == "trace"
        time.sleep(0.05)
        seen = set()
        for _ in range(14):
            kind, payload = state.select_trace("w1")
            if kind == "trace":
                seen.add(payload.trace_id)
        assert first.trace_id in seen


class TestApplyFeedback:
    def _run_feedback(self, state: HiveState, trace_id: int) -> FeedbackVector:
        rs = RestrictionSet.from_alphabet(state.net, state.weighted.lts.labels)
        trace = decode(state.weighted, trace_id)
        sigma = to_swarm(state.net, state.weighted, trace, trace_id)
        return run_iss(state.net, rs, sigma).feedback

    def test_unobserved_sibling_prunes_its_range(self):
        state = gated_player_state()
        fb = self._run_feedback(state, 0)
        added = state.apply_feedback(0, fb, "w0")
        assert (0, 1) in added
        assert (6, 13) in added  # the gated child subtree
        assert (6, 13) in state.pruned
        assert state.ledger.covered() == 1 + 7

    def test_full_observation_adds_only_the_singleton(self):
        state = player_state()
        fb = self._run_feedback(state, 3)
        added = state.apply_feedback(3, fb, "w0")
        assert added == [(3, 4)]
        assert state.pruned == []

    def test_unfired_step_prunes_subtree_containing_trace(self):
        state = gated_player_state()
        fb = self._run_feedback(state, 10)  # needs the impossible gp_sync2 first
        assert not fb.consumed_fully
        added = state.apply_feedback(10, fb, "w0")
        assert any(lo <= 10 < hi for lo, hi in added)

    def test_unknown_trace_id_ignored(self):
        state = player_state()
        assert state.apply_feedback(99, FeedbackVector((), True), "w0") == []
        assert state.runs == []

    def test_completion_sets_terminate(self):
        state = player_state()
        for k in range(14):
            self_fb = self._run_feedback(state, k)
            state.apply_feedback(k, self_fb, "w0")
        assert state.terminate_reason == "complete"
        assert state.terminated.is_set()

    def test_batching_waits_then_flushes(self):
        state = gated_player_state(feedback_batch=3)
        for k in (0, 1):
            assert state.apply_feedback(k, self._run_feedback(state, k), "w") == []
        assert state.ledger.covered() == 0
        added = state.apply_feedback(1, self._run_feedback(state, 1), "w")
        assert added  # third result flushes the queue
        assert state.ledger.covered() > 0

    def test_starved_select_flushes_batch(self):
        net = Network([chain_lts(1, "sb_"), single_state_lts()])
        state = HiveState(count_traces(chain_lts(1, "sb_")), net, feedback_batch=50)
        kind, swarm = state.select_trace("w0")
        assert kind == "trace" and swarm.trace_id == 0
        fb = self._run_feedback(state, 0)
        state.apply_feedback(0, fb, "w0")
        # queue holds the only result; a starved select must flush it
        assert state.select_trace("w1") == ("terminate", "complete")


class TestReportBug:
    def test_first_bug_sets_flag(self):
        state = player_state()
        state.report_bug(4, (L("recv_C1_1"),))
        assert state.terminate_reason == "bug"
        assert state.select_trace("w0") == ("terminate", "bug")
        assert len(state.bugs) == 1 and not state.bugs[0].late

    def test_second_bug_appended_first_kept(self):
        state = player_state()
        state.report_bug(4, (L("recv_C1_1"),))
        state.report_bug(5, (L("recv_C1_3"),))
        assert [b.trace_id for b in state.bugs] == [4, 5]
        assert state.bugs[1].late

    def test_bug_after_completion_logged_late(self):
        ledger = TraceRangeList(14)
        ledger.add(0, 14)
        state = player_state(ledger=ledger)
        state.report_bug(2, (L("send"),))
        assert state.terminate_reason == "complete"
        assert state.bugs[0].late


class TestWireService:
    def test_single_worker_single_trace_session(self):
        net = Network([chain_lts(2, "ws_"), single_state_lts()])
        state = HiveState(count_traces(chain_lts(2, "ws_")), net)
        with hive_session(state) as box:
            chan = connect(box["port"])
            chan.send_line("HELLO 1")
            assert chan.recv_line() == "HI 1"
            chan.send_line("GET")
            assert chan.recv_line() == "TRACE 0 2 ws_0 ws_1"
            chan.send_lines([
                "FEEDBACK 0 3 1",
                "FB 0 ws_0",
                "FB 1 ws_1",
                "FB 2",
                "END",
            ])
            assert chan.recv_line() == "ACK"
            chan.send_line("GET")
            assert chan.recv_line() == "TERMINATE complete"
            chan.send_line("BYE")
            chan.close()
        report = box["report"]
        assert report["termination"] == "complete"
        assert report["runs"] == 1
        assert report["est_runs"] == 1
        assert report["ledger"] == [[0, 1]]

    def test_retry_then_terminate_for_second_worker(self):
        net = Network([chain_lts(1, "rt_"), single_state_lts()])
        state = HiveState(count_traces(chain_lts(1, "rt_")), net)
        with hive_session(state) as box:
            one = connect(box["port"])
            two = connect(box["port"])
            one.send_line("GET")
            assert one.recv_line().startswith("TRACE 0")
            two.send_line("GET")
            reply = two.recv_line()
            assert reply.startswith("RETRY ")
            one.send_lines(["FEEDBACK 0 2 1", "FB 0 rt_0", "FB 1", "END"])
            assert one.recv_line() == "ACK"
            two.send_line("GET")
            assert two.recv_line() == "TERMINATE complete"
            for chan in (one, two):
                chan.send_line("BYE")
                chan.close()

    def test_bug_report_terminates_everyone(self):
        state = player_state()
        with hive_session(state) as box:
            chan = connect(box["port"])
            chan.send_line("GET")
            assert chan.recv_line().startswith("TRACE ")
            chan.send_line("BUG 0 recv_C1_3 play_1")
            assert chan.recv_line() == "ACK"
            chan.send_line("GET")
            assert chan.recv_line() == "TERMINATE bug"
            chan.send_line("BYE")
            chan.close()
        report = box["report"]
        assert report["termination"] == "bug"
        assert report["bugs"][0]["witness"] == ["recv_C1_3", "play_1"]

    def test_malformed_requests_get_err(self):
        state = player_state()
        with hive_session(state) as box:
            chan = connect(box["port"])
            chan.send_line("FROBNICATE 12")
            assert chan.recv_line().startswith("ERR ")
            assert chan.recv_line() is None  # connection closed
            chan.close()

            chan = connect(box["port"])
            chan.send_line("HELLO 99")
            assert chan.recv_line().startswith("ERR ")
            chan.close()

            chan = connect(box["port"])
            chan.send_lines(["FEEDBACK 0 2 1", "FB 1 oops", "END"])
            assert chan.recv_line().startswith("ERR ")
            chan.close()

    def test_unknown_trace_feedback_keeps_connection(self):
        state = player_state()
        with hive_session(state) as box:
            chan = connect(box["port"])
            chan.send_lines(["FEEDBACK 99 1 1", "FB 0", "END"])
            assert chan.recv_line() == "ERR unknown trace id"
            chan.send_line("GET")
            assert chan.recv_line().startswith("TRACE ")
            chan.send_line("BYE")
            chan.close()

    def test_disconnect_mid_lease_then_lease_expires(self):
        net = Network([chain_lts(1, "dm_"), single_state_lts()])
        state = HiveState(count_traces(chain_lts(1, "dm_")), net, lease_timeout=0.05)
        with hive_session(state) as box:
            lost = connect(box["port"])
            lost.send_line("GET")
            assert lost.recv_line().startswith("TRACE 0")
            lost.close()  # vanish while holding the lease
            time.sleep(0.1)
            chan = connect(box["port"])
            chan.send_line("GET")
            assert chan.recv_line().startswith("TRACE 0")  # re-issued
            chan.send_lines(["FEEDBACK 0 2 1", "FB 0 dm_0", "FB 1", "END"])
            assert chan.recv_line() == "ACK"
            chan.send_line("GET")
            assert chan.recv_line() == "TERMINATE complete"
            chan.send_line("BYE")
            chan.close()
        assert box["report"]["termination"] == "complete"
