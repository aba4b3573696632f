"""Offload planning: stage selection, transfer-slot assignment, topology
staggering, host buffer bins, and rank-to-node placement.

Each device owns a single transfer stream divided into alternating slots of
width t_o/2: even slots push activations out (D2H), odd slots bring them back
(H2D). One stream per device is deliberate; concurrent dual streams trade
determinism for latency jitter, and survive here only as a contention
comparison mode in the simulator.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .costs import HardwareSpec
from .ir import BuildingBlock, PassKind, Schedule, ScheduleError, lifespan


@dataclass(frozen=True)
class Transfer:
    direction: PassKind  # OFFLOAD (D2H) or RELOAD (H2D)
    device: int
    stage: int  # global stage index
    microbatch: int
    slot: int
    start: Fraction
    duration: Fraction

    @property
    def end(self) -> Fraction:
        return self.start + self.duration


@dataclass(frozen=True)
class DeviceStream:
    device: int
    t0: Fraction
    phase: Fraction
    transfers: tuple[Transfer, ...]  # stream order (slot ascending)
    skips: tuple[tuple[int, int], ...]  # (stage, mb) exempted: window < t_o
    late: tuple[tuple[int, int], ...]  # reload could not fit before B start
    windows: tuple[tuple[int, int, Fraction, Fraction], ...]  # (stage, mb, f_end, b_start)


@dataclass(frozen=True)
class OffloadPlan:
    t_o: Fraction
    stages: tuple[int, ...]  # device-local stage indices
    streams: tuple[DeviceStream, ...]
    sync_edges: tuple[tuple[tuple[int, int], tuple[int, int]], ...] = ()
    pinned: bool = False
    k: Fraction | None = None
    notices: tuple[str, ...] = ()

    @property
    def slot_width(self) -> Fraction:
        return self.t_o / 2

    def skip_list(self) -> list[tuple[int, int]]:
        return [pair for st in self.streams for pair in st.skips]

    def late_list(self) -> list[tuple[int, int]]:
        return [pair for st in self.streams for pair in st.late]

    def offloaded_pairs(self) -> set[tuple[int, int]]:
        out = set()
        for st in self.streams:
            for t in st.transfers:
                if t.direction == PassKind.RELOAD:
                    out.add((t.stage, t.microbatch))
        return out

    def with_report(self, k=None, notice: str | None = None) -> "OffloadPlan":
        return replace(
            self,
            k=self.k if k is None else k,
            notices=self.notices + ((notice,) if notice else ()),
        )

    def emit(self) -> str:
        lines = [f"# plan t_o={self.t_o} stages={','.join(map(str, self.stages)) or '-'}"]
        for st in self.streams:
            for t in st.transfers:
                lines.append(
                    f"{t.device} {t.stage} {t.microbatch} {t.direction} {t.start} {t.duration}"
                )
        return "\n".join(lines) + "\n"


def device_local_stages(sched: Schedule, device: int) -> list[int]:
    """Global stage indices hosted on a device, in chunk order."""
    return [s for s in range(sched.num_stages) if sched.placement[s] == device]


def select_offload_stages(block: BuildingBlock, n: int) -> tuple[int, ...]:
    """The n device-local stages with the largest lifespans.

    Lifespans are summed across devices per local stage; ties go to the lower
    stage index, whose activations sit at the front of the peak.
    """
    v = block.local_stages
    if not 0 <= n <= v:
        raise ScheduleError(f"n={n} outside [0, {v}]")
    totals = []
    for c in range(v):
        tot = sum((lifespan(block, c * block.devices + i) for i in range(block.devices)), Fraction(0))
        totals.append((-tot, c))
    totals.sort()
    return tuple(sorted(c for (_neg, c) in totals[:n]))


def _pass_times(sched: Schedule, device: int, stages_local) -> list[tuple[int, int, Fraction, Fraction]]:
    locals_ = device_local_stages(sched, device)
    chosen = [locals_[c] for c in stages_local if c < len(locals_)]
    out = []
    f_end: dict = {}
    b_start: dict = {}
    for p in sched.device_passes[device]:
        if p.stage in chosen:
            if p.kind == PassKind.F:
                f_end[(p.stage, p.microbatch)] = p.end
            elif p.kind == PassKind.B:
                b_start[(p.stage, p.microbatch)] = p.start
    for (stage, mb), fe in f_end.items():
        out.append((stage, mb, fe, b_start[(stage, mb)]))
    return out


def _plan_device(
    device: int,
    t0: Fraction,
    phase: Fraction,
    windows,
    t_o: Fraction,
) -> DeviceStream:
    """Assign D2H left-to-right into earliest free even slots, H2D right-to-left
    into the latest free odd slot ending before the backward pass. A pair whose
    forward-to-backward gap is under t_o is skipped outright: such short-lived
    activations barely touch the peak. A reload that finds no room in time is
    planned into the earliest later slot and reported (that is the throughput
    overhead regime)."""
    w = t_o / 2
    origin = t0 + phase
    occupied: dict[int, Transfer] = {}

    def slot_start(k: int) -> Fraction:
        return origin + k * w

    def first_free(kmin: int, parity: int) -> int:
        k = kmin if kmin % 2 == parity else kmin + 1
        if k < parity:
            k = parity
        while k in occupied:
            k += 2
        return k

    skips: list[tuple[int, int]] = []
    late: list[tuple[int, int]] = []
    d2h_slot: dict = {}

    planned = []
    for (stage, mb, f_end, b_start) in sorted(windows, key=lambda x: (x[2], x[0], x[1])):
        if b_start - f_end < t_o:
            skips.append((stage, mb))
            continue
        kmin = max(0, math.ceil((f_end - origin) / w))
        if kmin % 2:
            kmin += 1
        # grid feasibility on an empty stream: the earliest aligned offload
        # slot plus one reload slot must still end by the backward start;
        # near-threshold windows can miss purely by slot-phase quantization
        if slot_start(kmin) + 2 * w > b_start:
            skips.append((stage, mb))
            continue
        k = first_free(kmin, 0)
        occupied[k] = Transfer(PassKind.OFFLOAD, device, stage, mb, k, slot_start(k), w)
        d2h_slot[(stage, mb)] = k
        planned.append((stage, mb, f_end, b_start))

    for (stage, mb, f_end, b_start) in sorted(planned, key=lambda x: (-x[3], x[0], x[1])):
        klo = d2h_slot[(stage, mb)] + 1
        kmax = math.floor((b_start - origin) / w) - 1
        if kmax % 2 == 0:
            kmax -= 1
        k = kmax
        while k >= klo and k in occupied:
            k -= 2
        if k < klo or k < 1:
            k = first_free(max(klo, 1), 1)
            late.append((stage, mb))
        occupied[k] = Transfer(PassKind.RELOAD, device, stage, mb, k, slot_start(k), w)

    transfers = tuple(occupied[k] for k in sorted(occupied))
    return DeviceStream(
        device=device,
        t0=t0,
        phase=phase,
        transfers=transfers,
        skips=tuple(sorted(skips)),
        late=tuple(sorted(late)),
        windows=tuple(sorted(windows)),
    )


def plan_slots(sched: Schedule, stages, t_o: Fraction) -> OffloadPlan:
    """Build per-device transfer streams for the chosen device-local stages."""
    t_o = Fraction(t_o)
    if t_o <= 0:
        raise ScheduleError("t_o must be positive")
    stages = tuple(sorted(set(stages)))
    streams = []
    for dev in range(sched.devices):
        t0 = min((p.start for p in sched.device_passes[dev]), default=Fraction(0))
        windows = _pass_times(sched, dev, stages)
        streams.append(_plan_device(dev, t0, Fraction(0), windows, t_o))
    return OffloadPlan(t_o=t_o, stages=stages, streams=tuple(streams))


def apply_topology_sync(plan: OffloadPlan, hw: HardwareSpec) -> OffloadPlan:
    """Stagger paired devices' streams half a round trip apart and order their
    transfers via cross-device precedence, so the two devices sharing a switch
    never run the same direction at once (one offloads while the other
    reloads). Transfers in a synced plan hold their slot times instead of
    compacting, which keeps the alternation exact."""
    if hw.devices_per_switch != 2:
        return plan.with_report(
            notice=f"topology sync skipped: devices_per_switch={hw.devices_per_switch}"
        )
    w = plan.slot_width
    streams = list(plan.streams)
    edges: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for a in range(0, len(streams) - 1, 2):
        b = a + 1
        streams[b] = _plan_device(
            streams[b].device, streams[a].t0, w, streams[b].windows, plan.t_o
        )
        merged = sorted(
            [(t.start, t.device, t.slot) for t in streams[a].transfers]
            + [(t.start, t.device, t.slot) for t in streams[b].transfers]
        )
        for (p, q) in zip(merged, merged[1:]):
            if p[1] != q[1]:
                edges.append(((p[1], p[2]), (q[1], q[2])))
    return replace(plan, streams=tuple(streams), sync_edges=tuple(edges), pinned=True)


# ---------------------------------------------------------------------------
# Host buffer bins
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HostBufferLayout:
    bins: tuple[int, ...]
    placements: tuple[tuple[int, int, int], ...]  # (tensor index, bin, offset)

    @property
    def total(self) -> int:
        return sum(self.bins)

    def to_json(self) -> str:
        return json.dumps(
            {
                "bins": list(self.bins),
                "placements": [
                    {"tensor": t, "bin": b, "offset": o} for (t, b, o) in self.placements
                ],
                "total": self.total,
            },
            indent=2,
        )


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _fit_decreasing(sizes_desc, bins, best_fit: bool) -> list[tuple[int, int, int]] | None:
    """First- or best-fit decreasing into fixed bins; None when one does not fit."""
    free = list(bins)
    offsets = [0] * len(bins)
    out = []
    for (idx, size) in sizes_desc:
        choice = -1
        for b in range(len(bins)):
            if free[b] < size:
                continue
            if not best_fit:
                choice = b
                break
            if choice < 0 or free[b] < free[choice]:
                choice = b
        if choice < 0:
            return None
        out.append((idx, choice, offsets[choice]))
        offsets[choice] += size
        free[choice] -= size
    return out


def pack_host_bins(tensor_sizes) -> HostBufferLayout:
    """Pack pinned-buffer payloads into at most three power-of-two bins.

    Per-tensor allocation rounds every size up to a power of two, wasting up to
    half the memory; a few large shared bins avoid that. Candidate bin-size
    multisets of up to three powers of two are enumerated up to the next power
    of two above the total; tensors go in largest-first, placed first-fit and
    best-fit; the cheapest feasible layout wins.
    """
    sizes = list(tensor_sizes)
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("tensor sizes must be positive")
    total = sum(sizes)
    emax = _next_pow2(total).bit_length() - 1
    sizes_desc = sorted(enumerate(sizes), key=lambda kv: (-kv[1], kv[0]))
    biggest = sizes_desc[0][1]
    best = None
    exps = range(emax + 1)
    for count in (1, 2, 3):
        for combo in itertools.combinations_with_replacement(reversed(exps), count):
            bins = tuple(1 << e for e in combo)
            if bins[0] < biggest or sum(bins) < total:
                continue
            key = (sum(bins), len(bins), bins)
            if best is not None and key >= best[0]:
                continue
            placement = _fit_decreasing(sizes_desc, bins, best_fit=False)
            if placement is None:
                placement = _fit_decreasing(sizes_desc, bins, best_fit=True)
            if placement is None:
                continue
            best = (key, bins, placement)
    if best is None:  # unreachable: one bin of next_pow2(total) always fits? keep honest
        raise ValueError("no feasible bin layout found")
    _, bins, placement = best
    return HostBufferLayout(bins=bins, placements=tuple(sorted(placement)))


# ---------------------------------------------------------------------------
# Node assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeAssignment:
    num_nodes: int
    node_of: tuple[int, ...]  # rank -> node

    def ranks(self, node: int) -> list[int]:
        return [r for r, n in enumerate(self.node_of) if n == node]


def assign_ranks_to_nodes(d: int, num_nodes: int) -> NodeAssignment:
    """Pair rank i with rank d-1-i on one node: early ranks hold the most host
    bytes, late ranks the least, so mirrored grouping levels the per-node load.
    Walk ranks from both ends inward and deal them out in contiguous chunks."""
    if num_nodes < 1 or d % num_nodes:
        raise ScheduleError(f"d={d} not divisible by num_nodes={num_nodes}")
    zigzag = []
    lo, hi = 0, d - 1
    while lo <= hi:
        zigzag.append(lo)
        if hi != lo:
            zigzag.append(hi)
        lo += 1
        hi -= 1
    per = d // num_nodes
    node_of = [0] * d
    for pos, rank in enumerate(zigzag):
        node_of[rank] = pos // per
    return NodeAssignment(num_nodes=num_nodes, node_of=tuple(node_of))
