import itertools
import random
from fractions import Fraction

import pytest

from ppoff.builders import build_po, po_block
from ppoff.costs import HardwareSpec, PassCosts
from ppoff.ir import BuildingBlock, PassKind, ScheduleError
from ppoff.offload import (
    HostBufferLayout,
    apply_topology_sync,
    assign_ranks_to_nodes,
    pack_host_bins,
    plan_slots,
    select_offload_stages,
)
from ppoff.sim import peak_memory, simulate

UNIT = PassCosts.unit()


# --- stage selection ---------------------------------------------------------


def test_select_none_and_all():
    block = po_block(8, 4, UNIT)
    assert select_offload_stages(block, 0) == ()
    assert select_offload_stages(block, 4) == (0, 1, 2, 3)


def test_select_top_two_longest():
    block = po_block(8, 4, UNIT)
    assert select_offload_stages(block, 2) == (0, 1)


def test_select_tie_breaks_toward_lower_stage():
    # identical lifespans (flat degenerate block): the lower index wins
    blk = BuildingBlock(
        devices=1, local_stages=2,
        f_start=(Fraction(0), Fraction(0)),
        b_start=(Fraction(6), Fraction(6)),
        w_start=(Fraction(7), Fraction(7)),
        costs=UNIT,
    )
    assert select_offload_stages(blk, 1) == (0,)


def test_select_range_checked():
    block = po_block(4, 2, UNIT)
    with pytest.raises(ScheduleError):
        select_offload_stages(block, 3)


# --- slot planning -----------------------------------------------------------


def _window_map(plan):
    return {
        (stage, mb): (fe, bs)
        for stream in plan.streams
        for (stage, mb, fe, bs) in stream.windows
    }


def test_plan_invariants_d2h_after_f_h2d_before_b():
    sched = build_po(8, 2, 32, UNIT)
    plan = plan_slots(sched, (0, 1), UNIT.total)
    windows = _window_map(plan)
    late = set(plan.late_list())
    for stream in plan.streams:
        d2h_end = {}
        for t in stream.transfers:
            fe, bs = windows[(t.stage, t.microbatch)]
            if t.direction == PassKind.OFFLOAD:
                assert t.start >= fe
                d2h_end[(t.stage, t.microbatch)] = t.end
            else:
                assert t.start >= d2h_end[(t.stage, t.microbatch)]
                if (t.stage, t.microbatch) not in late:
                    assert t.end <= bs


def test_plan_alternating_slot_parity():
    sched = build_po(8, 2, 32, UNIT)
    plan = plan_slots(sched, (0,), UNIT.total)
    for stream in plan.streams:
        for t in stream.transfers:
            if t.direction == PassKind.OFFLOAD:
                assert t.slot % 2 == 0
            else:
                assert t.slot % 2 == 1


def test_plan_empty_stage_set():
    sched = build_po(4, 2, 8, UNIT)
    plan = plan_slots(sched, (), UNIT.total)
    assert all(not stream.transfers for stream in plan.streams)


def test_half_offload_one_stage_per_device_no_skips():
    # one stage offloaded per device with a full-compute round trip: every
    # occupied slot pairs with a compute pass and nothing needs skipping
    sched = build_po(8, 2, 32, UNIT)
    plan = plan_slots(sched, (0,), UNIT.total)
    assert plan.skip_list() == []
    assert plan.late_list() == []


def test_short_lifespan_stage_fully_skipped_peak_unchanged():
    sched = build_po(8, 2, 32, UNIT)
    block = po_block(8, 2, UNIT)
    from ppoff.ir import lifespan

    t_o = lifespan(block, 1 * 8) + 1  # longer than chunk 1's whole lifespan
    plan = plan_slots(sched, (1,), t_o)
    assert {pair[0] for pair in plan.skip_list()} == {8 + i for i in range(8)}
    assert len(plan.skip_list()) == 32 * 8  # every microbatch of chunk 1 on each device
    base = peak_memory(simulate(sched))["per_device"]
    with_plan = peak_memory(simulate(sched, plan))["per_device"]
    assert with_plan == base


# --- topology sync -----------------------------------------------------------


def test_topology_sync_complementary_and_edges():
    hw = HardwareSpec(compute_bandwidth=1e12, transfer_bandwidth=1e9, devices_per_switch=2)
    sched = build_po(4, 2, 16, UNIT)
    plan = plan_slots(sched, (0, 1), Fraction(1, 2) * UNIT.total)
    sync = apply_topology_sync(plan, hw)
    assert sync.pinned and sync.sync_edges
    w = sync.slot_width
    for pair_start in range(0, 4, 2):
        even = sync.streams[pair_start]
        odd = sync.streams[pair_start + 1]
        assert odd.phase - even.phase == w
        # same slot parity now means opposite directions at any instant
        for ta in even.transfers:
            for tb in odd.transfers:
                overlap = max(ta.start, tb.start) < min(ta.end, tb.end)
                if overlap:
                    assert ta.direction != tb.direction


def test_topology_sync_identity_for_other_switch_widths():
    hw = HardwareSpec(compute_bandwidth=1e12, transfer_bandwidth=1e9, devices_per_switch=4)
    sched = build_po(4, 2, 16, UNIT)
    plan = plan_slots(sched, (0,), UNIT.total)
    out = apply_topology_sync(plan, hw)
    assert out.streams == plan.streams and not out.pinned
    assert any("skipped" in n for n in out.notices)


# --- host buffer bins --------------------------------------------------------


def _naive(sizes):
    return sum(1 << max(0, (s - 1).bit_length()) for s in sizes)


def _exhaustive_optimum(sizes):
    """Minimum total over all <=3 power-of-two bin multisets with exact packing."""
    total = sum(sizes)
    emax = max(0, (total - 1).bit_length())
    best = None

    def fits(bins):
        free = list(bins)

        def rec(i):
            if i == len(order):
                return True
            s = order[i]
            seen = set()
            for b in range(len(free)):
                if free[b] >= s and free[b] not in seen:
                    seen.add(free[b])
                    free[b] -= s
                    if rec(i + 1):
                        free[b] += s
                        return True
                    free[b] += s
            return False

        order = sorted(sizes, reverse=True)
        return rec(0)

    for count in (1, 2, 3):
        for combo in itertools.combinations_with_replacement(range(emax + 1), count):
            bins = tuple(1 << e for e in combo)
            if sum(bins) < total:
                continue
            if best is not None and sum(bins) >= best:
                continue
            if fits(bins):
                best = sum(bins)
    return best


def _check_layout(layout: HostBufferLayout, sizes):
    assert 1 <= len(layout.bins) <= 3
    for b in layout.bins:
        assert b & (b - 1) == 0
    used = {}
    for (tensor, b, off) in layout.placements:
        used.setdefault(b, []).append((off, off + sizes[tensor]))
    assert len(layout.placements) == len(sizes)
    for b, spans in used.items():
        spans.sort()
        assert spans[0][0] >= 0 and spans[-1][1] <= layout.bins[b]
        for (a, bnd) in zip(spans, spans[1:]):
            assert a[1] <= bnd[0]


def test_bins_already_power_of_two():
    layout = pack_host_bins([8])
    assert layout.bins == (8,) and layout.total == 8


def test_bins_spec_example_five_three_three_one():
    layout = pack_host_bins([5, 3, 3, 1])
    assert layout.total == 12
    assert sorted(layout.bins, reverse=True) in ([8, 4],)
    _check_layout(layout, [5, 3, 3, 1])


def test_bins_three_nines_beats_naive():
    layout = pack_host_bins([9, 9, 9])
    assert layout.total < 48
    assert layout.total == _exhaustive_optimum([9, 9, 9]) == 32


def test_bins_random_lists_feasible_and_never_worse_than_naive():
    rng = random.Random(20250810)
    for _ in range(1000):
        n = rng.randint(1, 16)
        sizes = [rng.randint(1, 1 << 20) for _ in range(n)]
        layout = pack_host_bins(sizes)
        _check_layout(layout, sizes)
        assert layout.total <= _naive(sizes)


def test_bins_small_lists_near_optimal():
    rng = random.Random(42)
    lists = [[rng.randint(1, 64) for _ in range(rng.randint(1, 5))] for _ in range(400)]
    # plus full coverage of tiny shapes
    lists += [list(c) for c in itertools.combinations_with_replacement(range(1, 17), 2)]
    for sizes in lists:
        layout = pack_host_bins(sizes)
        _check_layout(layout, sizes)
        opt = _exhaustive_optimum(sizes)
        assert layout.total <= Fraction(5, 4) * opt


def test_bins_reject_bad_sizes():
    with pytest.raises(ValueError):
        pack_host_bins([])
    with pytest.raises(ValueError):
        pack_host_bins([4, 0])


# --- node assignment ---------------------------------------------------------


def test_node_assignment_sixteen_ranks_two_nodes():
    a = assign_ranks_to_nodes(16, 2)
    assert a.ranks(0) == [0, 1, 2, 3, 12, 13, 14, 15]
    assert a.ranks(1) == [4, 5, 6, 7, 8, 9, 10, 11]


def test_node_assignment_single_node():
    a = assign_ranks_to_nodes(8, 1)
    assert a.ranks(0) == list(range(8))


def test_node_assignment_balanced_counts():
    for (d, n) in [(8, 2), (8, 4), (16, 4), (12, 3)]:
        a = assign_ranks_to_nodes(d, n)
        for node in range(n):
            assert len(a.ranks(node)) == d // n


def test_node_assignment_invalid():
    with pytest.raises(ScheduleError):
        assign_ranks_to_nodes(8, 3)
