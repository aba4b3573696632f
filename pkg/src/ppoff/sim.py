"""Exact discrete-event execution of a schedule plus an offload plan.

Compute passes run serially per device in schedule order at their declared
durations. Transfers run serially per stream; under shared-switch contention a
transfer's instantaneous rate halves while another same-direction transfer is
active on its switch, and halves again while its own device runs the opposite
direction concurrently (dual-stream mode only). All arithmetic is rational, so
identical inputs give bit-identical traces.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
from dataclasses import dataclass
from fractions import Fraction

from .costs import ModelSpec, PassCosts, activation_bytes_per_layer
from .ir import MemoryTimeline, Pass, PassKind, Schedule
from .offload import NodeAssignment, OffloadPlan


class DeadlockError(Exception):
    def __init__(self, message: str, waiting=()):
        super().__init__(message)
        self.waiting = tuple(waiting)


@dataclass(frozen=True)
class ContentionModel:
    mode: str = "none"  # "none" | "shared-switch-halving"
    devices_per_switch: int = 2

    def __post_init__(self):
        if self.mode not in ("none", "shared-switch-halving"):
            raise ValueError(f"unknown contention mode {self.mode!r}")

    def switch_of(self, device: int) -> int:
        return device // self.devices_per_switch


@dataclass(frozen=True)
class SimTrace:
    schedule: Schedule
    passes: tuple[Pass, ...]  # compute and transfer passes with realized times
    makespan: Fraction
    device_busy: tuple[Fraction, ...]
    memory: MemoryTimeline  # device residency, offload-aware
    host_events: tuple[tuple[Fraction, int, int], ...]  # (time, rank, +/-units)
    contention_log: tuple[tuple[Fraction, Fraction, int, str, Fraction], ...]
    bytes_per_unit: int = 0

    def compute_passes(self):
        return [p for p in self.passes if p.kind in (PassKind.F, PassKind.B, PassKind.W)]

    def transfer_passes(self):
        return [p for p in self.passes if p.kind in (PassKind.OFFLOAD, PassKind.RELOAD)]

    def last_transfer_end(self) -> Fraction:
        ends = [p.end for p in self.transfer_passes()]
        return max(ends) if ends else Fraction(0)

    def pass_times(self) -> dict:
        return {(p.kind, p.stage, p.microbatch): (p.start, p.end) for p in self.passes}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["device", "stage", "microbatch", "kind", "start", "end", "duration"])
        for p in sorted(self.passes, key=lambda p: (p.start, p.device, str(p.kind))):
            w.writerow(
                [p.device, p.stage, p.microbatch, str(p.kind), str(p.start), str(p.end), str(p.duration)]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        peaks = peak_memory(self)
        return {
            "makespan": float(self.makespan),
            "bubble": [float(b) for b in bubble_time(self)],
            "peak_units": [u for (u, _b) in peaks["per_device"]],
            "peak_bytes": [b for (_u, b) in peaks["per_device"]],
            "max_peak_units": peaks["max_units"],
            "contention_events": len(self.contention_log),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)

    def to_pass_lines(self) -> str:
        """Realized passes (transfers included) in the renderer's line format."""
        from .ir import _frac_str

        lines = []
        for p in sorted(self.passes, key=lambda p: (p.device, p.start, str(p.kind))):
            lines.append(
                f"{p.device} {p.stage} {p.microbatch} {p.kind} "
                f"{_frac_str(p.start)} {_frac_str(p.duration)}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class _Stream:
    device: int
    items: list  # [(key, Transfer)] in slot order
    ready: list = None  # heap of (slot, key, transfer) whose inputs are scheduled
    pending: int = 0
    busy_key: object = None
    avail: Fraction = Fraction(0)

    def __post_init__(self):
        if self.ready is None:
            self.ready = []
        self.pending = len(self.items)


def _transfer_streams(plan: OffloadPlan | None, mode: str):
    streams = []
    if plan is None:
        return streams
    for st in plan.streams:
        if mode == "single":
            groups = [st.transfers]
        elif mode == "dual":
            groups = [
                tuple(t for t in st.transfers if t.direction == PassKind.OFFLOAD),
                tuple(t for t in st.transfers if t.direction == PassKind.RELOAD),
            ]
        else:
            raise ValueError(f"unknown stream mode {mode!r}")
        for grp in groups:
            if grp:
                items = [(("T", t.device, t.slot), t) for t in grp]
                streams.append(_Stream(device=st.device, items=items))
    return streams


def simulate(
    sched: Schedule,
    plan: OffloadPlan | None = None,
    costs: PassCosts | None = None,
    hw=None,
    contention: ContentionModel | None = None,
    model: ModelSpec | None = None,
    stream_mode: str = "single",
) -> SimTrace:
    """Event-driven earliest-start execution.

    Honors per-device pass order, inter-stage F/B dependencies plus the
    communication lag, per-stream transfer order, offload-after-forward and
    backward-after-reload edges, cross-device sync edges, and pinned slot
    times for synchronized plans. Raises DeadlockError on cyclic waits.
    """
    costs = costs or sched.costs
    if contention is None:
        dps = hw.devices_per_switch if hw is not None else 2
        contention = ContentionModel("none", dps)
    halving = contention.mode == "shared-switch-halving"
    t_comm = costs.t_comm
    last_stage = sched.num_stages - 1

    dev_orders = [list(dev) for dev in sched.device_passes]
    streams = _transfer_streams(plan, stream_mode)

    reload_key: dict = {}
    offload_key: dict = {}
    floors: dict = {}
    sync_after: dict = {}
    if plan is not None:
        slot_key = {}
        for stm in streams:
            for key, t in stm.items:
                slot_key[(t.device, t.slot)] = key
                if t.direction == PassKind.RELOAD:
                    reload_key[(t.stage, t.microbatch)] = key
                    # a reload never runs before its planned slot: reloading
                    # early just re-inflates device memory
                    floors[key] = t.start
                else:
                    offload_key[(t.stage, t.microbatch)] = key
                if plan.pinned:
                    floors[key] = t.start
        for (a, b) in plan.sync_edges:
            ka, kb = slot_key.get(a), slot_key.get(b)
            if ka is not None and kb is not None:
                sync_after.setdefault(kb, []).append(ka)

    ends: dict = {}
    starts: dict = {}

    def compute_deps(p: Pass):
        deps = []
        if p.kind == PassKind.F:
            if p.stage > 0:
                deps.append(((PassKind.F, p.stage - 1, p.microbatch), t_comm))
        elif p.kind == PassKind.B:
            if p.stage < last_stage:
                deps.append(((PassKind.B, p.stage + 1, p.microbatch), t_comm))
            deps.append(((PassKind.F, p.stage, p.microbatch), Fraction(0)))
            rk = reload_key.get((p.stage, p.microbatch))
            if rk is not None:
                deps.append((rk, Fraction(0)))
        else:  # W
            deps.append(((PassKind.B, p.stage, p.microbatch), Fraction(0)))
        return deps

    def transfer_deps(key, t):
        deps = []
        if t.direction == PassKind.OFFLOAD:
            deps.append(((PassKind.F, t.stage, t.microbatch), Fraction(0)))
        else:
            ok = offload_key.get((t.stage, t.microbatch))
            if ok is not None:
                deps.append((ok, Fraction(0)))
        for prev in sync_after.get(key, ()):
            deps.append((prev, Fraction(0)))
        return deps

    dev_ptr = [0] * sched.devices
    dev_avail = [Fraction(0)] * sched.devices

    # fluid state per active transfer: key -> [remaining, settled_at, rate, transfer]
    active: dict = {}

    heap: list = []
    seq = 0

    def push(t: Fraction):
        nonlocal seq
        heapq.heappush(heap, (t, seq))
        seq += 1

    realized: list[Pass] = []
    contention_log: list = []

    def dep_ready_time(deps):
        t = Fraction(0)
        for (key, lag) in deps:
            e = ends.get(key)
            if e is None:
                return None
            t = max(t, e + lag)
        return t

    # incremental readiness for transfers: a transfer enters its stream's
    # ready heap once every input it waits on has a scheduled end time
    t_deps: dict = {}
    t_missing: dict = {}
    t_dependents: dict = {}
    t_stream: dict = {}
    for stm in streams:
        for (key, t) in stm.items:
            deps = transfer_deps(key, t)
            t_deps[key] = deps
            t_stream[key] = stm
            miss = 0
            for (dk, _lag) in deps:
                if dk not in ends:
                    miss += 1
                    t_dependents.setdefault(dk, []).append((key, t))
            t_missing[key] = miss
            if miss == 0:
                heapq.heappush(stm.ready, (t.slot, key, t))

    def notify(done_key):
        for (key, t) in t_dependents.get(done_key, ()):
            t_missing[key] -= 1
            if t_missing[key] == 0:
                heapq.heappush(t_stream[key].ready, (t.slot, key, t))

    def current_rate(t, others):
        if not halving:
            return Fraction(1)
        same_dir = any(
            o is not t
            and contention.switch_of(o.device) == contention.switch_of(t.device)
            and o.direction == t.direction
            for o in others
        )
        cross_dev = any(o is not t and o.device == t.device and o.direction != t.direction for o in others)
        return Fraction(1, (2 if same_dir else 1) * (2 if cross_dev else 1))

    def rerate(now: Fraction):
        """Apply current rates; settle progress and push a new ETA on change.

        A transfer whose rate is unchanged keeps its previously pushed ETA
        event (progress is linear, so that event is still exact)."""
        objs = [st[3] for st in active.values()]
        for k, st in active.items():
            rem, at, rate, t = st
            r = current_rate(t, objs)
            fresh = at == now and rem == t.duration
            if r != rate:
                if now > at:
                    if rate < 1:
                        contention_log.append((at, now, t.device, str(t.direction), rate))
                    rem -= rate * (now - at)
                st[0], st[1], st[2] = rem, now, r
                push(now + rem / r)
            elif fresh:
                push(now + rem / r)

    def finish_done(now: Fraction):
        done = [k for k, st in active.items() if st[0] - st[2] * (now - st[1]) <= 0]
        for k in done:
            rem, at, rate, t = active.pop(k)
            if rate < 1 and now > at:
                contention_log.append((at, now, t.device, str(t.direction), rate))
            ends[k] = now
            notify(k)
            realized.append(
                Pass(t.direction, t.device, t.stage, t.microbatch, starts[k], now - starts[k])
            )
        return bool(done)

    total_tasks = sum(len(o) for o in dev_orders) + sum(len(s.items) for s in streams)
    started = 0
    t_now = Fraction(0)

    while True:
        # release streams whose running transfer completed
        for stm in streams:
            if stm.busy_key is not None and stm.busy_key in ends:
                stm.avail = ends[stm.busy_key]
                stm.busy_key = None
        # start everything that can run at t_now
        any_start = True
        rate_dirty = False
        while any_start:
            any_start = False
            for i in range(sched.devices):
                while dev_ptr[i] < len(dev_orders[i]):
                    p = dev_orders[i][dev_ptr[i]]
                    rt = dep_ready_time(compute_deps(p))
                    if rt is None:
                        break
                    start = max(rt, dev_avail[i])
                    if start > t_now:
                        push(start)
                        break
                    key = (p.kind, p.stage, p.microbatch)
                    starts[key] = t_now
                    ends[key] = t_now + p.duration
                    notify(key)
                    dev_avail[i] = ends[key]
                    realized.append(Pass(p.kind, p.device, p.stage, p.microbatch, t_now, p.duration))
                    push(ends[key])
                    dev_ptr[i] += 1
                    started += 1
                    any_start = True
            for stm in streams:
                if stm.busy_key is not None or not stm.ready:
                    continue
                # the idle stream takes its lowest-slot transfer whose inputs
                # are already scheduled; a later slot overtakes an earlier one
                # still waiting on unscheduled work, so an oversubscribed plan
                # slows down instead of deadlocking
                slot, key, t = stm.ready[0]
                eff = max(dep_ready_time(t_deps[key]), stm.avail, floors.get(key, Fraction(0)))
                if eff > t_now:
                    push(eff)
                    continue
                heapq.heappop(stm.ready)
                starts[key] = t_now
                active[key] = [t.duration, t_now, Fraction(1), t]
                stm.busy_key = key
                stm.pending -= 1
                started += 1
                any_start = True
                rate_dirty = True
        if rate_dirty and active:
            rerate(t_now)
        if started >= total_tasks and not active:
            break
        # advance to the next event
        while heap and heap[0][0] <= t_now:
            heapq.heappop(heap)
        if not heap:
            cycle = _wait_cycle(sched, dev_orders, dev_ptr, streams, ends, compute_deps, t_deps)
            stuck = _stuck_report(sched, dev_orders, dev_ptr, streams)
            raise DeadlockError(
                f"no runnable passes; wait cycle: {cycle or stuck}", cycle or stuck
            )
        t_now = heapq.heappop(heap)[0]
        finish_done(t_now)
        if active:
            rerate(t_now)

    makespan = max(ends.values(), default=Fraction(0))
    busy = tuple(
        sum((p.duration for p in sched.device_passes[i]), Fraction(0))
        for i in range(sched.devices)
    )

    bpu = 0
    if model is not None:
        bpu = activation_bytes_per_layer(model, recompute=True) * model.layers_per_stage

    mem_events, host_events = _memory_events(sched, starts, ends, reload_key, offload_key)
    memory = MemoryTimeline(devices=sched.devices, bytes_per_unit=bpu, events=mem_events)
    return SimTrace(
        schedule=sched,
        passes=tuple(sorted(realized, key=lambda p: (p.start, p.device, str(p.kind), p.stage, p.microbatch))),
        makespan=makespan,
        device_busy=busy,
        memory=memory,
        host_events=tuple(host_events),
        contention_log=tuple(contention_log),
        bytes_per_unit=bpu,
    )


def _wait_cycle(sched, dev_orders, dev_ptr, streams, ends, compute_deps, t_deps):
    """Walk blocked-head -> missing-input -> its device's blocked head until a
    repeat: that loop is the cycle to report."""
    owner = {}
    for i in range(sched.devices):
        if dev_ptr[i] < len(dev_orders[i]):
            p = dev_orders[i][dev_ptr[i]]
            owner[i] = (p.kind, p.stage, p.microbatch)
    device_of = {}
    for i, order in enumerate(dev_orders):
        for p in order:
            device_of[(p.kind, p.stage, p.microbatch)] = i
    cur = next(iter(owner.values()), None)
    path = []
    seen = {}
    while cur is not None:
        if cur in seen:
            return tuple(path[seen[cur]:])
        seen[cur] = len(path)
        path.append(cur)
        missing = [k for (k, _lag) in compute_deps(
            Pass(cur[0], device_of.get(cur, 0), cur[1], cur[2], Fraction(0), Fraction(0))
        ) if k not in ends] if cur[0] in (PassKind.F, PassKind.B, PassKind.W) else []
        if not missing:
            return ()
        nxt = missing[0]
        dev = device_of.get(nxt)
        cur = owner.get(dev) if dev is not None else None
    return ()


def _stuck_report(sched, dev_orders, dev_ptr, streams):
    stuck = []
    for i in range(sched.devices):
        if dev_ptr[i] < len(dev_orders[i]):
            p = dev_orders[i][dev_ptr[i]]
            stuck.append((str(p.kind), p.stage, p.microbatch))
    for stm in streams:
        if stm.pending > 0 and stm.ready:
            _slot, _key, t = stm.ready[0]
            stuck.append((str(t.direction), t.stage, t.microbatch))
        elif stm.pending > 0:
            stuck.append((f"stream[{stm.device}]", stm.pending, "unscheduled-inputs"))
    return stuck


def _memory_events(sched, starts, ends, reload_key, offload_key):
    """Device residency: F start to D2H end when offloaded (plus H2D start to
    B end after reload), F start to B end otherwise. Host residency: D2H end
    to H2D end, attributed to the owning rank."""
    u = sched.units_per_stage
    dev_events: list[list] = [[] for _ in range(sched.devices)]
    host_events: list = []
    offloaded = set(reload_key) & set(offload_key)
    for dev in range(sched.devices):
        for p in sched.device_passes[dev]:
            key = (p.kind, p.stage, p.microbatch)
            pair = (p.stage, p.microbatch)
            if p.kind == PassKind.F:
                dev_events[dev].append((starts[key], p.stage, u))
                if pair in offloaded:
                    ok, rk = offload_key[pair], reload_key[pair]
                    dev_events[dev].append((ends[ok], p.stage, -u))
                    dev_events[dev].append((starts[rk], p.stage, u))
                    host_events.append((ends[ok], dev, u))
                    host_events.append((ends[rk], dev, -u))
            elif p.kind == PassKind.B:
                dev_events[dev].append((ends[key], p.stage, -u))
    for ev in dev_events:
        ev.sort(key=lambda e: (e[0], e[2]))
    host_events.sort(key=lambda e: (e[0], e[2]))
    return tuple(tuple(ev) for ev in dev_events), host_events


def bubble_time(trace: SimTrace) -> tuple[Fraction, ...]:
    """Per-device idle inside the iteration: makespan minus busy time."""
    return tuple(trace.makespan - b for b in trace.device_busy)


def peak_memory(trace: SimTrace) -> dict:
    """Per-device and global peak residency, in units and bytes."""
    per_device = []
    for i in range(trace.schedule.devices):
        units = trace.memory.peak(i)
        per_device.append((units, units * trace.bytes_per_unit))
    max_units = max((u for (u, _b) in per_device), default=0)
    return {
        "per_device": per_device,
        "max_units": max_units,
        "max_bytes": max_units * trace.bytes_per_unit,
    }


def host_peak_memory(trace: SimTrace, assignment: NodeAssignment | None = None) -> list:
    """Peak of summed offloaded units (bytes when a model was given) per node."""
    if assignment is None:
        assignment = NodeAssignment(1, tuple(0 for _ in range(trace.schedule.devices)))
    cur = [0] * assignment.num_nodes
    peak = [0] * assignment.num_nodes
    for (t, rank, delta) in sorted(trace.host_events, key=lambda e: (e[0], e[2])):
        node = assignment.node_of[rank]
        cur[node] += delta
        peak[node] = max(peak[node], cur[node])
    scale = trace.bytes_per_unit if trace.bytes_per_unit else 1
    return [p * scale for p in peak]
