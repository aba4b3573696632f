"""Constructors for the named pipeline schedules.

All builders emit dependency-tight schedules: declared start times equal the
earliest-start times under the per-device pass order, so a no-offload
simulation reproduces them exactly.

Schedule family (d devices, v stages per device, m microbatches):

  1f1b       one merged stage per device (v layer groups), no backward split.
  1f1b-i     interleaved variant, v >= 2 chunks per device, no split.
  gis        interleaved with split backward and the reduced warmup
             d(v-1)+d-i; peak drops from dv+d-1 to dv at no bubble cost.
  gis-g      interleaving with inner groups of g in [ceil(d/2), d]; smaller g
             trades (d-g)(v-1) extra warmup bubble units for peak g(v-1)+d.
  gis-h      gis-g at the minimum g = ceil(d/2).
  po         the gis-h building block repeated uniformly per microbatch;
             per-stage memory spreads in proportion to lifespan, which is what
             makes stage-level offload better than linear.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .costs import PassCosts
from .ir import (
    BuildingBlock,
    PassKind,
    Schedule,
    ScheduleError,
    bi_level_orders,
    interleave_compose,
    uniform_repeat,
    _assemble,
    _earliest_start,
)


def _check_basic(d: int, m: int):
    if d < 1:
        raise ScheduleError("need at least one device")
    if m < d:
        raise ScheduleError(f"too few microbatches: m={m} < d={d}")


def warmup_1f1b(d: int, rank: int) -> int:
    return d - rank


def warmup_interleaved(d: int, v: int, rank: int) -> int:
    return d * (v - 1) + 2 * (d - rank) - 1


def warmup_gis(d: int, v: int, rank: int, g: int | None = None) -> int:
    return (d if g is None else g) * (v - 1) + d - rank


def build_1f1b(d: int, v: int, m: int, costs: PassCosts) -> Schedule:
    """Classic one-forward-one-backward: d stages, each holding v layer groups."""
    _check_basic(d, m)
    warm = [warmup_1f1b(d, i) for i in range(d)]
    orders = bi_level_orders(d, 1, d, m, warm, split=False)

    def dur(kind: PassKind) -> Fraction:
        if kind == PassKind.F:
            return costs.t_f * v
        return (costs.t_b + costs.t_w) * v

    start = _earliest_start(orders, d, dur, costs.t_comm)
    return _assemble(
        orders, start,
        devices=d, local_stages=1, num_stages=d, microbatches=m,
        units=v, split=False, costs=costs, kind="1f1b",
    )


def build_interleaved_1f1b(d: int, v: int, m: int, costs: PassCosts) -> Schedule:
    """Vanilla interleaved schedule: rank i warms up d(v-1)+2(d-i)-1 forwards."""
    _check_basic(d, m)
    if v < 2:
        raise ScheduleError("interleaved schedule needs v >= 2 stages per device")
    if m % d:
        raise ScheduleError("m must be a multiple of d")
    block = _shape_block(d, v, costs, split=False)
    warm = [warmup_interleaved(d, v, i) for i in range(d)]
    sched = interleave_compose(block, d, m, warmups=warm, kind="1f1b-i")
    return sched


def build_gis(d: int, v: int, m: int, costs: PassCosts) -> Schedule:
    """Split-backward interleaved schedule with the adjusted warmup d(v-1)+d-i."""
    if m % d:
        raise ScheduleError("m must be a multiple of d")
    return build_gis_g(d, v, m, d, costs)


def build_gis_g(d: int, v: int, m: int, g: int, costs: PassCosts) -> Schedule:
    _check_basic(d, m)
    if v < 1:
        raise ScheduleError("v must be >= 1")
    gmin = (d + 1) // 2
    if not gmin <= g <= d:
        raise ScheduleError(f"g={g} outside [{gmin}, {d}]")
    block = _shape_block(d, v, costs, split=True)
    warm = [warmup_gis(d, v, i, g) for i in range(d)]
    kind = "gis" if g == d else ("gis-h" if g == gmin else "gis-g")
    return interleave_compose(block, g, m, warmups=warm, kind=kind)


def build_gis_h(d: int, v: int, m: int, costs: PassCosts) -> Schedule:
    return build_gis_g(d, v, m, (d + 1) // 2, costs)


def _shape_block(d: int, v: int, costs: PassCosts, split: bool) -> BuildingBlock:
    """Minimal chain-tight block used as the shape carrier for composition."""
    n = v * d
    f = []
    hop_f = costs.t_f + costs.t_comm
    for s in range(n):
        f.append(s * hop_f)
    top = f[-1] + costs.t_f
    b = [Fraction(0)] * n
    bdur = costs.t_b if split else costs.t_b + costs.t_w
    for k, s in enumerate(reversed(range(n))):
        b[s] = top + costs.t_comm * k + bdur * k
    w = tuple(b[s] + costs.t_b for s in range(n)) if split else None
    return BuildingBlock(
        devices=d, local_stages=v,
        f_start=tuple(f), b_start=tuple(b), w_start=w, costs=costs,
    )


# ---------------------------------------------------------------------------
# Uniform-repeat family
# ---------------------------------------------------------------------------


def _stride_prefixes(v: int, need: Fraction, ts: Fraction) -> list[Fraction]:
    """Cumulative chunk advances: v-1 steps, each a multiple of ts covering
    `need`, whose partial sums hit distinct residues mod v (so each chunk's
    passes land in a distinct slot of the repeat interval). Minimal total,
    found by iterative deepening on the excess over the per-step minimum."""
    qmin = 1
    while qmin * ts < need:
        qmin += 1
    if v == 1:
        return [Fraction(0)]
    found: list = [None]

    def dfs(res_seen, last, steps, budget):
        if found[0] is not None:
            return
        if len(steps) == v - 1:
            found[0] = tuple(steps)
            return
        for e in range(budget + 1):
            q = qmin + e
            r = (last + q) % v
            if r not in res_seen:
                dfs(res_seen | {r}, last + q, steps + [q], budget - e)
                if found[0] is not None:
                    return

    budget = 0
    while found[0] is None:
        dfs({0}, 0, [], budget)
        budget += 1
    a = [Fraction(0)]
    for q in found[0]:
        a.append(a[-1] + q * ts)
    return a


def po_block(d: int, v: int, costs: PassCosts, target_peak: int | None = None) -> BuildingBlock:
    """Building block for the uniform-repeat schedule.

    Forward passes descend the stage chain tightly; backward passes climb back
    with the complementary stagger ts - (tF + comm), so each device's 3v passes
    tile the repeat interval v*ts exactly and the repeat runs collision-free at
    full utilization. Chunk-to-chunk advances are the smallest interval
    multiples that clear the cross-device staircases while giving every chunk
    its own slot. The backward chain's base start is padded so the summed
    rank-0 lifespans divided by the interval (the in-flight count the repeat
    will hold) meet the target peak, default ceil(d/2)*(v-1)+d.
    """
    ts = costs.total
    interval = v * ts
    psi_f = costs.t_f + costs.t_comm
    psi_b = ts - psi_f
    if psi_b < costs.t_b + costs.t_comm:
        # degenerate cost mix (tW < 2*comm or tF > tB+tW): fall back to a
        # chain-tight block; the repeat repairs collisions
        psi_b = costs.t_b + costs.t_comm
    if target_peak is None:
        target_peak = ((d + 1) // 2) * (v - 1) + d
    a_f = _stride_prefixes(v, psi_f * (d - 1) + costs.t_f + costs.t_comm, ts)
    a_b = _stride_prefixes(v, psi_b * (d - 1) + costs.t_b + costs.t_comm, ts)
    # backward base: residue-aligned so each slot runs [F][B][W], at least one
    # forward-chain length up, then padded toward the target in-flight count
    s_res = (costs.t_f - psi_b * (d - 1)) % ts
    s_min = psi_f * (d - 1) + a_f[v - 1] + costs.t_f + costs.t_comm
    s0 = s_res + math.ceil((s_min - s_res) / ts) * ts

    def rank0_lifespan_sum(base: Fraction) -> Fraction:
        tot = Fraction(0)
        for c in range(v):
            tot += base + psi_b * (d - 1) + a_b[v - 1 - c] + costs.t_b - a_f[c]
        return tot

    while rank0_lifespan_sum(s0 + ts) <= target_peak * interval:
        s0 += ts
    n = v * d
    f = [Fraction(0)] * n
    b = [Fraction(0)] * n
    w = [Fraction(0)] * n
    for c in range(v):
        for i in range(d):
            s = c * d + i
            f[s] = psi_f * i + a_f[c]
            b[s] = s0 + psi_b * (d - 1 - i) + a_b[v - 1 - c]
            w[s] = b[s] + costs.t_b
    return BuildingBlock(
        devices=d, local_stages=v,
        f_start=tuple(f), b_start=tuple(b), w_start=tuple(w), costs=costs,
    )


def build_po(d: int, v: int, m: int, costs: PassCosts) -> Schedule:
    """Uniform repeat of the half-interval building block at interval v*ts."""
    _check_basic(d, m)
    block = po_block(d, v, costs)
    interval = v * costs.total
    # the repeat fixes the order; retime dependency-tight for the final times
    repeated = uniform_repeat(block, m, interval)
    orders = [
        [(p.kind, p.stage, p.microbatch) for p in dev] for dev in repeated.device_passes
    ]
    start = _earliest_start(orders, block.num_stages, block.duration, costs.t_comm)
    sched = _assemble(
        orders, start,
        devices=d, local_stages=v, num_stages=v * d, microbatches=m,
        units=1, split=True, costs=costs, kind="po", interval=interval,
    )
    return sched


def build_1f1b_full_offload(d: int, m: int, costs: PassCosts, t_o: Fraction, v: int = 1):
    """1f1b with its single merged stage per device planned for offload.

    t_o is the host round trip for one device's full stage payload. Pairs whose
    forward-to-backward window is shorter than t_o fall on the skip list (the
    last rank's window is zero by construction, so its pairs always skip).
    Reports k relative to the merged stage compute time.
    """
    from .offload import plan_slots  # local import to avoid a cycle

    sched = build_1f1b(d, v, m, costs)
    plan = plan_slots(sched, {0}, Fraction(t_o))
    k = Fraction(t_o) / (costs.total * v)
    plan = plan.with_report(k=k)
    return sched, plan


def extract_block(sched: Schedule, microbatch: int | None = None) -> BuildingBlock:
    from .ir import extract_block as _extract

    return _extract(sched, microbatch)


def stage_contribution_fixture(costs: PassCosts | None = None):
    """Two compositions of one hand-tuned block (d=2, v=2, m=8, no split).

    The interleaved and uniformly repeated schedules share the block and the
    rank-0 peak (five activations), but attribute it differently: dropping the
    first pipeline stage's activations lowers the interleaved peak by three
    and the uniform-repeat peak by four. The block's backward offsets are
    hand-read offsets, not derived values.
    """
    costs = costs or PassCosts(Fraction(1), Fraction(1), Fraction(0))
    block = BuildingBlock(
        devices=2,
        local_stages=2,
        f_start=(Fraction(0), Fraction(1), Fraction(2), Fraction(3)),
        b_start=(Fraction(13), Fraction(12), Fraction(5), Fraction(4)),
        w_start=None,
        costs=costs,
    )
    interleaved = build_interleaved_1f1b(2, 2, 8, costs)
    uniform = uniform_repeat(block, 8, Fraction(4))
    return interleaved, uniform, block


BUILDERS = {
    "1f1b": lambda d, v, m, costs, g=None: build_1f1b(d, v, m, costs),
    "1f1b-i": lambda d, v, m, costs, g=None: build_interleaved_1f1b(d, v, m, costs),
    "gis": lambda d, v, m, costs, g=None: build_gis(d, v, m, costs),
    "gis-g": lambda d, v, m, costs, g=None: build_gis_g(d, v, m, g, costs),
    "gis-h": lambda d, v, m, costs, g=None: build_gis_h(d, v, m, costs),
    "po": lambda d, v, m, costs, g=None: build_po(d, v, m, costs),
}
