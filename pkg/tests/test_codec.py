from __future__ import annotations

import random

import pytest

from swarmcheck.codec import child_ranges, decode, encode, prefix_range, to_swarm
from swarmcheck.counting import count_traces
from swarmcheck.lts import Label, Lts, Network, SyncRule

from conftest import L
from oracles import maximal_traces, random_acyclic_lts

# decoding trace 10 of the player fixture walks these ranges, one per state
TRACE_10_RANGES = [
    (0, 14), (6, 13), (6, 13), (7, 13), (7, 13), (7, 12),
    (9, 12), (9, 12), (10, 12), (10, 12), (10, 12), (10, 11),
]
TRACE_10_LABELS = [
    "recv_C1_2", "send", "fwd", "send_ack", "recv_D", "e_c",
    "hold", "g_b", "step_H", "step_I", "off_J",
]


class TestDecode:
    def test_trace_10_walkthrough(self, player):
        trace = decode(player, 10)
        assert [lab.name for lab in trace.labels] == TRACE_10_LABELS
        ranges = [prefix_range(player, trace.labels[:i]) for i in range(len(trace.path))]
        assert ranges == TRACE_10_RANGES

    def test_trace_0_takes_first_child_everywhere(self, player):
        trace = decode(player, 0)
        state = player.lts.initial
        for lab in trace.labels:
            first_lab, first_child = player.children(state)[0]
            assert lab is first_lab
            state = first_child

    def test_out_of_range(self, player):
        for bad in (-1, 14, 10**9):
            with pytest.raises(ValueError):
                decode(player, bad)

    @pytest.mark.parametrize("seed", range(30))
    def test_bijection_against_enumeration(self, seed):
        w = count_traces(random_acyclic_lts(random.Random(seed), tag=f"cd{seed}"))
        # the oracle enumerates the weighted LTS in child order, which is
        # exactly the order decode must produce
        oracle = maximal_traces(w.lts)
        assert w.total == len(oracle)
        decoded = [decode(w, k).labels for k in range(w.total)]
        assert decoded == oracle
        assert len(set(decoded)) == len(decoded)
        for k, labels in enumerate(decoded):
            assert encode(w, labels) == k

    def test_path_states_connected(self, player):
        for k in range(player.total):
            trace = decode(player, k)
            for i, lab in enumerate(trace.labels):
                assert player.lts.by_label[trace.path[i]][lab] == trace.path[i + 1]
            assert not player.children(trace.path[-1])


class TestPrefixRange:
    def test_empty_prefix(self, player):
        assert prefix_range(player, []) == (0, 14)

    def test_documented_child_ranges(self, player):
        assert prefix_range(player, [L("recv_C1_2")]) == (6, 13)
        assert prefix_range(player, [L("recv_C1_3")]) == (0, 3)
        assert prefix_range(player, [L("recv_C1_1")]) == (3, 6)
        assert prefix_range(player, [L("off(C1)")]) == (13, 14)

    def test_width_is_target_weight(self, player):
        lo, hi = prefix_range(player, [L("recv_C1_2"), L("send")])
        state = player.lts.by_label[player.lts.by_label[0][L("recv_C1_2")]][L("send")]
        assert hi - lo == player.tc[state]

    def test_unexecutable_prefix(self, player):
        with pytest.raises(ValueError):
            prefix_range(player, [L("send")])

    @pytest.mark.parametrize("seed", range(10))
    def test_children_partition_parent(self, seed):
        w = count_traces(random_acyclic_lts(random.Random(seed + 500), tag=f"pp{seed}"))
        stack = [(w.lts.initial, 0)]
        while stack:
            state, base = stack.pop()
            blocks = list(child_ranges(w, state, base))
            expect = base
            for _lab, child, lo, hi in blocks:
                assert lo == expect
                assert hi - lo == w.tc[child]
                expect = hi
                stack.append((child, lo))
            if blocks:
                assert expect == base + w.tc[state]


class TestToSwarm:
    def _net_with_player(self, player):
        peer = Lts(2, 0, [(0, L("ts_listen"), 1)])
        return Network(
            [Lts(1, 0, []), peer],
            [SyncRule(L("send"), L("ts_listen"), L("ts_comm"))],
        )

    def test_no_sync_labels_identity(self, player):
        net = Network([Lts(1, 0, [])])
        trace = decode(player, 0)
        swarm = to_swarm(net, player, trace, 0)
        assert swarm.actions == trace.labels
        assert swarm.trace_id == 0

    def test_sync_label_replaced(self, player):
        net = self._net_with_player(player)
        trace = decode(player, 10)
        swarm = to_swarm(net, player, trace, 10)
        assert L("ts_comm") in swarm.actions
        assert L("send") not in swarm.actions

    def test_length_preserved(self, player):
        net = self._net_with_player(player)
        trace = decode(player, 10)
        assert len(to_swarm(net, player, trace, 10).actions) == len(trace.labels)
