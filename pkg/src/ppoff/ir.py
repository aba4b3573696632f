"""Schedule representation: passes, building blocks, composition, validation, memory.

A schedule is a per-device total order of F/B/W passes with start times. All
times are exact rationals; two schedules built from the same costs compare
exactly. Activation residency is counted in stage-activation units: one unit is
the activations of one (pipeline stage, microbatch) pair, with merged-stage
schedules carrying more units per pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .costs import ModelSpec, PassCosts, activation_bytes_per_layer


class ScheduleError(Exception):
    pass


class InfeasibleIntervalError(ScheduleError):
    """Repeat interval too small: collision repair pushed a pass beyond bound."""


class PassKind(str, Enum):
    F = "F"
    B = "B"
    W = "W"
    OFFLOAD = "OFFLOAD"
    RELOAD = "RELOAD"

    def __str__(self) -> str:  # serialization uses bare names
        return self.value


_KIND_ORDER = {PassKind.F: 0, PassKind.B: 1, PassKind.W: 2}


@dataclass(frozen=True, order=False)
class Pass:
    kind: PassKind
    device: int
    stage: int
    microbatch: int
    start: Fraction
    duration: Fraction

    @property
    def end(self) -> Fraction:
        return self.start + self.duration


@dataclass(frozen=True)
class BuildingBlock:
    """Relative F/B/W start offsets of one microbatch across all stages.

    Stage s lives on device s % devices. w_start is None for schedules that run
    the backward pass unsplit (W folded into B).
    """

    devices: int
    local_stages: int
    f_start: tuple[Fraction, ...]
    b_start: tuple[Fraction, ...]
    w_start: tuple[Fraction, ...] | None
    costs: PassCosts
    units: int = 1

    def __post_init__(self):
        n = self.devices * self.local_stages
        if not (len(self.f_start) == len(self.b_start) == n):
            raise ScheduleError("offset arrays must cover devices*local_stages stages")
        if self.w_start is not None and len(self.w_start) != n:
            raise ScheduleError("w_start must cover all stages when present")
        for s in range(n):
            if self.b_start[s] < self.f_start[s] + self.duration(PassKind.F):
                raise ScheduleError(f"stage {s}: backward begins before its forward ends")
            if self.w_start is not None and self.w_start[s] < self.b_start[s] + self.duration(PassKind.B):
                raise ScheduleError(f"stage {s}: weight pass begins before its backward ends")
        for s in range(n - 1):
            if self.f_start[s + 1] < self.f_start[s]:
                raise ScheduleError("forward offsets must be non-decreasing along the chain")
            if self.b_start[s + 1] > self.b_start[s]:
                raise ScheduleError("backward offsets must be non-increasing along the chain")

    @property
    def num_stages(self) -> int:
        return self.devices * self.local_stages

    @property
    def split_backward(self) -> bool:
        return self.w_start is not None

    def device_of(self, stage: int) -> int:
        return stage % self.devices

    def duration(self, kind: PassKind) -> Fraction:
        if kind == PassKind.F:
            return self.costs.t_f * self.units
        if kind == PassKind.W:
            return self.costs.t_w * self.units
        if self.split_backward:
            return self.costs.t_b * self.units
        return (self.costs.t_b + self.costs.t_w) * self.units

    def span(self) -> Fraction:
        last = max(self.b_start) + self.duration(PassKind.B)
        if self.w_start is not None:
            last = max(last, max(self.w_start) + self.duration(PassKind.W))
        return last - min(self.f_start)


def lifespan(block: BuildingBlock, stage: int) -> Fraction:
    """Time one stage's activation stays resident: F start to B end."""
    if not 0 <= stage < block.num_stages:
        raise ScheduleError(f"stage {stage} out of range")
    return block.b_start[stage] + block.duration(PassKind.B) - block.f_start[stage]


@dataclass(frozen=True)
class Schedule:
    devices: int
    local_stages: int
    num_stages: int
    microbatches: int
    placement: tuple[int, ...]  # stage -> device
    units_per_stage: int
    split_backward: bool
    costs: PassCosts
    kind: str = "custom"
    g: int | None = None
    interval: Fraction | None = None
    device_passes: tuple[tuple[Pass, ...], ...] = ()

    def all_passes(self):
        for dev in self.device_passes:
            yield from dev

    @property
    def makespan(self) -> Fraction:
        return max((p.end for p in self.all_passes()), default=Fraction(0))

    def busy(self, device: int) -> Fraction:
        return sum((p.duration for p in self.device_passes[device]), Fraction(0))

    def duration(self, kind: PassKind) -> Fraction:
        if kind == PassKind.F:
            return self.costs.t_f * self.units_per_stage
        if kind == PassKind.W:
            return self.costs.t_w * self.units_per_stage
        if self.split_backward:
            return self.costs.t_b * self.units_per_stage
        return (self.costs.t_b + self.costs.t_w) * self.units_per_stage

    def find(self, kind: PassKind, stage: int, microbatch: int) -> Pass:
        for p in self.device_passes[self.placement[stage]]:
            if p.kind == kind and p.stage == stage and p.microbatch == microbatch:
                return p
        raise KeyError((kind, stage, microbatch))


@dataclass(frozen=True)
class Violation:
    kind: str  # "dependency" | "overlap" | "missing" | "duplicate"
    message: str
    passes: tuple = ()


# ---------------------------------------------------------------------------
# Timing engine: earliest-start times for per-device ordered pass lists.
# ---------------------------------------------------------------------------


def _earliest_start(
    orders: list[list[tuple[PassKind, int, int]]],
    num_stages: int,
    durations,
    t_comm: Fraction,
    floors=None,
    reorder_escape: bool = False,
) -> dict:
    """Assign start times honoring device order plus F/B/W chain dependencies.

    floors maps (kind, stage, mb) to a minimum start time; used by uniform
    repeat to preserve a block's designed gaps while fixing dependencies by
    right-shift only. Raises ScheduleError on cyclic waits, unless
    reorder_escape is set: then a wedged order is repaired in place by pulling
    the first already-enabled forward pass ahead on the lowest stuck rank (the
    escape hatch for group patterns whose tail does not lace up exactly).
    """
    start: dict = {}
    end: dict = {}
    idx = [0] * len(orders)
    avail = [Fraction(0)] * len(orders)
    pending = sum(len(o) for o in orders)
    done = 0
    while done < pending:
        progressed = False
        for i, order in enumerate(orders):
            while idx[i] < len(order):
                key = order[idx[i]]
                kind, stage, mb = key
                t = avail[i]
                if floors is not None:
                    f = floors.get(key)
                    if f is not None and f > t:
                        t = f
                blocked = False
                if kind == PassKind.F:
                    if stage > 0:
                        p = end.get((PassKind.F, stage - 1, mb))
                        if p is None:
                            blocked = True
                        else:
                            t = max(t, p + t_comm)
                elif kind == PassKind.B:
                    if stage < num_stages - 1:
                        p = end.get((PassKind.B, stage + 1, mb))
                        if p is None:
                            blocked = True
                        else:
                            t = max(t, p + t_comm)
                    own_f = end.get((PassKind.F, stage, mb))
                    if own_f is None:
                        blocked = True
                    else:
                        t = max(t, own_f)
                else:  # W
                    p = end.get((PassKind.B, stage, mb))
                    if p is None:
                        blocked = True
                    else:
                        t = max(t, p)
                if blocked:
                    break
                start[key] = t
                end[key] = t + durations(kind)
                avail[i] = end[key]
                idx[i] += 1
                done += 1
                progressed = True
        if not progressed:
            if reorder_escape and _escape_reorder(orders, idx, end, num_stages):
                continue
            stuck = [orders[i][idx[i]] for i in range(len(orders)) if idx[i] < len(orders[i])]
            raise ScheduleError(f"cyclic dependencies; next unschedulable passes: {stuck}")
    return start


def _escape_reorder(orders, idx, end, num_stages) -> bool:
    """Pull the first forward pass whose inputs are already scheduled to the
    front of the lowest-rank stuck device. Returns False when no such pass
    exists (a genuine cycle)."""
    for i, order in enumerate(orders):
        if idx[i] >= len(order):
            continue
        for pos in range(idx[i], len(order)):
            kind, stage, mb = order[pos]
            if kind != PassKind.F:
                continue
            if stage == 0 or (PassKind.F, stage - 1, mb) in end:
                if pos != idx[i]:
                    order.insert(idx[i], order.pop(pos))
                    return True
                break  # head already an F: its input is missing, try next rank
    return False


def _assemble(
    orders,
    start,
    *,
    devices: int,
    local_stages: int,
    num_stages: int,
    microbatches: int,
    units: int,
    split: bool,
    costs: PassCosts,
    kind: str,
    g: int | None = None,
    interval: Fraction | None = None,
) -> Schedule:
    def dur(k: PassKind) -> Fraction:
        if k == PassKind.F:
            return costs.t_f * units
        if k == PassKind.W:
            return costs.t_w * units
        return (costs.t_b if split else costs.t_b + costs.t_w) * units

    placement = tuple(s % devices for s in range(num_stages))
    device_passes = []
    for i, order in enumerate(orders):
        device_passes.append(
            tuple(
                Pass(k, i, s, mb, start[(k, s, mb)], dur(k))
                for (k, s, mb) in order
            )
        )
    return Schedule(
        devices=devices,
        local_stages=local_stages,
        num_stages=num_stages,
        microbatches=microbatches,
        placement=placement,
        units_per_stage=units,
        split_backward=split,
        costs=costs,
        kind=kind,
        g=g,
        interval=interval,
        device_passes=tuple(device_passes),
    )


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def _block_shift_orders(block: BuildingBlock, m: int, interval: Fraction):
    """Shift block offsets per microbatch; sort per device; sweep-repair overlaps.

    Returns (orders, floors, max_shift): floors carry the repaired start times.
    Collisions are repaired by minimally right-shifting the later pass, scanning
    in start order with ties broken by microbatch then F < B < W.
    """
    per_dev: list[list] = [[] for _ in range(block.devices)]
    kinds = [(PassKind.F, block.f_start), (PassKind.B, block.b_start)]
    if block.w_start is not None:
        kinds.append((PassKind.W, block.w_start))
    for j in range(m):
        for kind, offs in kinds:
            for s in range(block.num_stages):
                t = offs[s] + j * interval
                per_dev[block.device_of(s)].append((t, j, _KIND_ORDER[kind], kind, s))
    orders = []
    floors = {}
    max_shift = Fraction(0)
    for i in range(block.devices):
        dev = sorted(per_dev[i])
        cur = None
        order = []
        for (t, j, _, kind, s) in dev:
            if cur is not None and t < cur:
                max_shift = max(max_shift, cur - t)
                t = cur
            cur = t + block.duration(kind)
            order.append((kind, s, j))
            floors[(kind, s, j)] = t
        orders.append(order)
    return orders, floors, max_shift


def uniform_repeat(block: BuildingBlock, m: int, interval: Fraction) -> Schedule:
    """Repeat a building block every `interval`, repairing on-device collisions.

    Pass times keep the block's designed gaps (they are floors); dependencies
    are fixed by further minimal right-shifts only.
    """
    interval = Fraction(interval)
    if interval <= 0:
        raise ScheduleError("interval must be positive")
    if m < 1:
        raise ScheduleError("need at least one microbatch")
    busy = [Fraction(0)] * block.devices
    kinds = [PassKind.F, PassKind.B] + ([PassKind.W] if block.split_backward else [])
    for s in range(block.num_stages):
        for kind in kinds:
            busy[block.device_of(s)] += block.duration(kind)
    if interval < max(busy):
        # repair would right-shift every microbatch a little further than the
        # last: the repeat never stabilizes
        raise InfeasibleIntervalError(
            f"interval {interval} below the per-microbatch device busy time {max(busy)}"
        )
    orders, floors, _max_shift = _block_shift_orders(block, m, interval)
    start = _earliest_start(
        orders, block.num_stages, block.duration, block.costs.t_comm, floors=floors
    )
    return _assemble(
        orders,
        start,
        devices=block.devices,
        local_stages=block.local_stages,
        num_stages=block.num_stages,
        microbatches=m,
        units=block.units,
        split=block.split_backward,
        costs=block.costs,
        kind="uniform-repeat",
        interval=interval,
    )


def _grouped(seq_len: int, g: int):
    """Microbatch indices chunked into groups of g (last group may be short)."""
    out = []
    j = 0
    while j < seq_len:
        out.append(range(j, min(j + g, seq_len)))
        j += g
    return out


def bi_level_orders(d: int, v: int, g: int, m: int, warmups, split: bool):
    """Per-device pass orders for the two-level pattern: the outer loop walks
    the device-local stages, the inner loop runs g microbatches per stage.
    Steady state alternates one backward (plus its W) with one forward."""
    groups = _grouped(m, g)
    orders = []
    for i in range(d):
        fwd = [(c * d + i, j) for grp in groups for c in range(v) for j in grp]
        bwd = [(c * d + i, j) for grp in groups for c in reversed(range(v)) for j in grp]
        w = min(warmups[i], len(fwd))
        order: list[tuple[PassKind, int, int]] = [(PassKind.F, s, j) for (s, j) in fwd[:w]]
        fi = w
        for (s, j) in bwd:
            order.append((PassKind.B, s, j))
            if split:
                order.append((PassKind.W, s, j))
            if fi < len(fwd):
                fs, fj = fwd[fi]
                order.append((PassKind.F, fs, fj))
                fi += 1
        orders.append(order)
    return orders


def interleave_compose(
    block: BuildingBlock,
    g: int,
    m: int,
    warmups=None,
    kind: str = "interleave",
) -> Schedule:
    """Compose a schedule with the two-level interleaving pattern.

    g is the inner group size, between ceil(d/2) and d; g == d gives the
    classic interleaved microbatch ordering. m that is not a multiple of g gets
    a final short group with the same pattern. Times are dependency-tight.
    """
    d, v = block.devices, block.local_stages
    if not (d + 1) // 2 <= g <= d:
        raise ScheduleError(f"g={g} outside [{(d + 1) // 2}, {d}]")
    if m < 1:
        raise ScheduleError("need at least one microbatch")
    if warmups is None:
        warmups = [g * (v - 1) + d - i for i in range(d)]
    orders = bi_level_orders(d, v, g, m, warmups, block.split_backward)
    start = _earliest_start(
        orders, block.num_stages, block.duration, block.costs.t_comm,
        reorder_escape=(m % g != 0),
    )
    return _assemble(
        orders,
        start,
        devices=d,
        local_stages=v,
        num_stages=block.num_stages,
        microbatches=m,
        units=block.units,
        split=block.split_backward,
        costs=block.costs,
        kind=kind,
        g=g,
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(sched: Schedule, costs: PassCosts | None = None) -> list[Violation]:
    """Check dependency edges, on-device overlap, and completeness.

    Violations are data, not exceptions; an empty list means the schedule is
    consistent.
    """
    costs = costs or sched.costs
    out: list[Violation] = []
    seen: dict = {}
    for p in sched.all_passes():
        key = (p.kind, p.stage, p.microbatch)
        if key in seen:
            out.append(Violation("duplicate", f"{key} appears more than once", (seen[key], p)))
        seen[key] = p

    kinds = [PassKind.F, PassKind.B] + ([PassKind.W] if sched.split_backward else [])
    for s in range(sched.num_stages):
        for j in range(sched.microbatches):
            for k in kinds:
                if (k, s, j) not in seen:
                    out.append(Violation("missing", f"({k}, stage {s}, mb {j}) absent"))

    def get(k, s, j):
        return seen.get((k, s, j))

    for s in range(sched.num_stages):
        for j in range(sched.microbatches):
            f, b = get(PassKind.F, s, j), get(PassKind.B, s, j)
            if s + 1 < sched.num_stages:
                nf = get(PassKind.F, s + 1, j)
                if f and nf and nf.start < f.end + costs.t_comm:
                    out.append(
                        Violation(
                            "dependency",
                            f"F stage {s + 1} mb {j} starts before F stage {s} ends (+comm)",
                            (f, nf),
                        )
                    )
                nb = get(PassKind.B, s + 1, j)
                if b and nb and b.start < nb.end + costs.t_comm:
                    out.append(
                        Violation(
                            "dependency",
                            f"B stage {s} mb {j} starts before B stage {s + 1} ends (+comm)",
                            (nb, b),
                        )
                    )
            if f and b and b.start < f.end:
                out.append(
                    Violation("dependency", f"B stage {s} mb {j} starts before its F ends", (f, b))
                )
            if sched.split_backward:
                w = get(PassKind.W, s, j)
                if b and w and w.start < b.end:
                    out.append(
                        Violation("dependency", f"W stage {s} mb {j} starts before its B ends", (b, w))
                    )

    for i, dev in enumerate(sched.device_passes):
        ordered = sorted(dev, key=lambda p: (p.start, p.microbatch, _KIND_ORDER[p.kind]))
        holder = None
        for p in ordered:
            if p.duration == 0:  # an empty interval cannot occupy the device
                continue
            if holder is not None and p.start < holder.end:
                out.append(
                    Violation("overlap", f"device {i}: {holder.kind} and {p.kind} overlap", (holder, p))
                )
            if holder is None or p.end > holder.end:
                holder = p
    return out


# ---------------------------------------------------------------------------
# Memory timelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryTimeline:
    """Piecewise-constant per-device residency in stage-activation units.

    events[d] is a time-sorted tuple of (time, stage, +/-units): allocation at
    F start, release at B end. Frees sort before allocations at equal times
    (residency intervals are half-open).
    """

    devices: int
    bytes_per_unit: int
    events: tuple[tuple[tuple[Fraction, int, int], ...], ...]
    base_units: int = 0  # constant per-device overhead (e.g. weight-grad buffer)

    def series(self, device: int):
        """(time, units, bytes) breakpoints for one device."""
        cur = self.base_units
        out = [(Fraction(0), cur, cur * self.bytes_per_unit)]
        for (t, _stage, delta) in self.events[device]:
            cur += delta
            if out and out[-1][0] == t:
                out[-1] = (t, cur, cur * self.bytes_per_unit)
            else:
                out.append((t, cur, cur * self.bytes_per_unit))
        return out

    def peak(self, device: int, exclude_stages=()) -> int:
        cur = self.base_units
        best = cur
        for (t, stage, delta) in self.events[device]:
            if stage in exclude_stages:
                continue
            cur += delta
            best = max(best, cur)
        return best

    def peak_bytes(self, device: int) -> int:
        return self.peak(device) * self.bytes_per_unit

    def peak_time(self, device: int) -> Fraction:
        cur = self.base_units
        best = cur
        at = Fraction(0)
        for (t, _stage, delta) in self.events[device]:
            cur += delta
            if cur > best:
                best = cur
                at = t
        return at

    def attribution_at(self, device: int, time: Fraction) -> dict[int, int]:
        """Resident units per stage just after `time` (half-open intervals)."""
        res: dict[int, int] = {}
        for (t, stage, delta) in self.events[device]:
            if t > time:
                break
            res[stage] = res.get(stage, 0) + delta
        return {s: u for s, u in res.items() if u != 0}

    def integral(self, device: int) -> Fraction:
        """Time integral of resident units (area under the curve)."""
        area = Fraction(0)
        prev_t = None
        cur = self.base_units
        for (t, _stage, delta) in self.events[device]:
            if prev_t is not None:
                area += cur * (t - prev_t)
            cur += delta
            prev_t = t
        return area

    def global_peak(self) -> int:
        return max(self.peak(i) for i in range(self.devices))


def memory_timeline(
    sched: Schedule,
    model: ModelSpec | None = None,
    recompute: bool = True,
    wgrad_buffer_units: int = 0,
) -> MemoryTimeline:
    """One stage-activation allocated at each F start, freed at the matching
    B end. W passes hold no tracked activation."""
    bpu = 0
    if model is not None:
        bpu = activation_bytes_per_layer(model, recompute=recompute) * model.layers_per_stage
    events: list[list[tuple[Fraction, int, int]]] = [[] for _ in range(sched.devices)]
    u = sched.units_per_stage
    for p in sched.all_passes():
        if p.kind == PassKind.F:
            events[p.device].append((p.start, p.stage, u))
        elif p.kind == PassKind.B:
            events[p.device].append((p.end, p.stage, -u))
    for ev in events:
        ev.sort(key=lambda e: (e[0], e[2]))
    return MemoryTimeline(
        devices=sched.devices,
        bytes_per_unit=bpu,
        events=tuple(tuple(ev) for ev in events),
        base_units=wgrad_buffer_units,
    )


def stage_contribution_at_peak(tl: MemoryTimeline, device: int) -> dict[int, int]:
    """Per-stage resident units at the earliest instant the device peaks."""
    return tl.attribution_at(device, tl.peak_time(device))


# ---------------------------------------------------------------------------
# Extraction and serialization
# ---------------------------------------------------------------------------


def extract_block(sched: Schedule, microbatch: int | None = None) -> BuildingBlock:
    """Read one microbatch's relative pass offsets out of a schedule.

    Defaults to a mid-stream microbatch, which for long enough schedules sits
    in the steady region and carries the schedule's characteristic lifespans.
    """
    if microbatch is None:
        microbatch = sched.microbatches // 2
    f = [None] * sched.num_stages
    b = [None] * sched.num_stages
    w = [None] * sched.num_stages if sched.split_backward else None
    for p in sched.all_passes():
        if p.microbatch != microbatch:
            continue
        if p.kind == PassKind.F:
            f[p.stage] = p.start
        elif p.kind == PassKind.B:
            b[p.stage] = p.start
        elif p.kind == PassKind.W and w is not None:
            w[p.stage] = p.start
    if any(x is None for x in f) or any(x is None for x in b):
        raise ScheduleError(f"microbatch {microbatch} incomplete in schedule")
    base = f[0]
    f = tuple(x - base for x in f)
    b = tuple(x - base for x in b)
    w = tuple(x - base for x in w) if w is not None else None
    return BuildingBlock(
        devices=sched.devices,
        local_stages=sched.local_stages,
        f_start=f,
        b_start=b,
        w_start=w,
        costs=sched.costs,
        units=sched.units_per_stage,
    )


def _frac_str(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def emit_schedule(sched: Schedule) -> str:
    """Line format: one pass per line, `device stage microbatch kind start duration`."""
    lines = [
        f"# schedule kind={sched.kind} d={sched.devices} v={sched.local_stages}"
        f" stages={sched.num_stages} m={sched.microbatches} units={sched.units_per_stage}"
        f" split={int(sched.split_backward)}"
        + (f" g={sched.g}" if sched.g is not None else "")
        + (f" interval={_frac_str(sched.interval)}" if sched.interval is not None else ""),
        f"# costs tF={_frac_str(sched.costs.t_f)} tB={_frac_str(sched.costs.t_b)}"
        f" tW={_frac_str(sched.costs.t_w)} comm={_frac_str(sched.costs.t_comm)}",
    ]
    for dev in sched.device_passes:
        for p in dev:
            lines.append(
                f"{p.device} {p.stage} {p.microbatch} {p.kind} "
                f"{_frac_str(p.start)} {_frac_str(p.duration)}"
            )
    return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> Schedule:
    meta: dict = {}
    costs_meta: dict = {}
    passes: list[Pass] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if fields and fields[0] == "schedule":
                meta = dict(f.split("=", 1) for f in fields[1:])
            elif fields and fields[0] == "costs":
                costs_meta = dict(f.split("=", 1) for f in fields[1:])
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ScheduleError(f"line {ln}: expected 6 fields, got {len(parts)}")
        try:
            dev, stage, mb = int(parts[0]), int(parts[1]), int(parts[2])
            kind = PassKind(parts[3])
            start, dur = Fraction(parts[4]), Fraction(parts[5])
        except ValueError as e:
            raise ScheduleError(f"line {ln}: {e}") from e
        passes.append(Pass(kind, dev, stage, mb, start, dur))
    if not meta:
        raise ScheduleError("missing '# schedule ...' header")
    costs = PassCosts(
        costs_meta.get("tF", 0),
        costs_meta.get("tB", 1),
        costs_meta.get("tW", 0),
        costs_meta.get("comm", 0),
    )
    d = int(meta["d"])
    num_stages = int(meta["stages"])
    per_dev: list[list[Pass]] = [[] for _ in range(d)]
    for p in passes:
        per_dev[p.device].append(p)
    for dev in per_dev:
        dev.sort(key=lambda p: (p.start, p.microbatch, _KIND_ORDER.get(p.kind, 3)))
    interval = Fraction(meta["interval"]) if "interval" in meta else None
    return Schedule(
        devices=d,
        local_stages=int(meta["v"]),
        num_stages=num_stages,
        microbatches=int(meta["m"]),
        placement=tuple(s % d for s in range(num_stages)),
        units_per_stage=int(meta["units"]),
        split_backward=bool(int(meta["split"])),
        costs=costs,
        kind=meta.get("kind", "custom"),
        g=int(meta["g"]) if "g" in meta else None,
        interval=interval,
        device_passes=tuple(tuple(dev) for dev in per_dev),
    )
