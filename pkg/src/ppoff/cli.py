"""Command-line surface: build, plan, simulate, sweep, verify, render.

Configuration is a JSON document; every field can be overridden by a flag.
Outputs: `.schedule` pass-lines, `.csv` traces, `.json` summaries, `.svg`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from fractions import Fraction

from . import analysis
from .builders import BUILDERS, build_gis_g, po_block
from .costs import PRESETS, HardwareSpec, ModelSpec, PassCosts, compute_k, estimate_pass_costs, offload_round_trip
from .ir import ScheduleError, emit_schedule, memory_timeline, parse_schedule, validate
from .offload import apply_topology_sync, plan_slots, select_offload_stages
from .render import render_ascii, render_svg
from .sim import ContentionModel, DeadlockError, host_peak_memory, simulate

SCHEDULES = ("1f1b", "1f1b-i", "gis", "gis-g", "gis-h", "po")


class ConfigError(Exception):
    pass


def _atomic_write(path: str, data: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    with os.fdopen(fd, "w") as f:
        f.write(data)
    os.replace(tmp, path)


def _load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        with open(args.config) as f:
            cfg = json.load(f)
    sched = cfg.setdefault("schedule", {})
    for key in ("schedule", "d", "v", "m", "g"):
        val = getattr(args, key if key != "schedule" else "schedule_kind", None)
        if val is not None:
            sched["kind" if key == "schedule" else key] = val
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; have {sorted(PRESETS)}")
        p = PRESETS[args.preset]
        cfg["model"] = {
            "hidden_size": p.hidden_size,
            "sequence_length": p.sequence_length,
            "microbatch_size": p.microbatch_size,
            "layers_per_stage": p.layers_per_stage,
            "bytes_per_element": p.bytes_per_element,
        }
    if getattr(args, "offload", None) is not None:
        cfg["offload"] = args.offload
    if getattr(args, "contention", None) is not None:
        cfg["contention"] = args.contention
    if getattr(args, "costs", None) is not None:
        parts = args.costs.split(",")
        if len(parts) not in (3, 4):
            raise ConfigError("--costs expects tF,tB,tW[,comm]")
        cfg["costs"] = {
            "t_f": parts[0], "t_b": parts[1], "t_w": parts[2],
            "t_comm": parts[3] if len(parts) == 4 else "0",
        }
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    cfg.setdefault("out", "out")
    return cfg


def _model(cfg) -> ModelSpec:
    m = cfg.get("model", {})
    return ModelSpec(
        hidden_size=m.get("hidden_size", 4096),
        sequence_length=m.get("sequence_length", 4096),
        microbatch_size=m.get("microbatch_size", 1),
        layers_per_stage=m.get("layers_per_stage", 1),
        bytes_per_element=m.get("bytes_per_element", 2),
    )


def _hardware(cfg) -> HardwareSpec:
    h = cfg.get("hardware", {})
    return HardwareSpec(
        compute_bandwidth=h.get("compute_bandwidth", 220e12),
        transfer_bandwidth=h.get("transfer_bandwidth", 15e9),
        p2p_latency=h.get("p2p_latency", 0.0),
        devices_per_switch=h.get("devices_per_switch", 2),
        host_memory_capacity=h.get("host_memory_capacity"),
    )


def _costs(cfg, model, hw) -> PassCosts:
    c = cfg.get("costs")
    if c is None:
        return estimate_pass_costs(model, hw)
    return PassCosts(c.get("t_f", 1), c.get("t_b", 1), c.get("t_w", 1), c.get("t_comm", 0))


def _build(cfg, costs):
    s = cfg.get("schedule", {})
    kind = s.get("kind")
    if kind not in SCHEDULES:
        raise ConfigError(f"--schedule must be one of {SCHEDULES}, got {kind!r}")
    d, v, m = int(s.get("d", 4)), int(s.get("v", 1)), int(s.get("m", 0) or 4 * int(s.get("d", 4)))
    g = s.get("g")
    if g is not None and kind != "gis-g":
        raise ConfigError("--g applies only to --schedule gis-g")
    if kind == "gis-g":
        if g is None:
            raise ConfigError("--schedule gis-g requires --g")
        return build_gis_g(d, v, m, int(g), costs), d, v, m
    return BUILDERS[kind](d, v, m, costs), d, v, m


def _t_o_units(model, hw, costs) -> Fraction:
    """Per-stage round trip expressed in the schedule's cost units.

    The configured pass costs may be synthetic (e.g. 1,1,1), so the round trip
    is rescaled through the exact feasibility ratio: t_o = k * stage compute.
    """
    k_exact = offload_round_trip(model, hw) / estimate_pass_costs(model, hw).total
    return k_exact * costs.total


def _offload_count(spec_val, v: int) -> int:
    if spec_val in (None, "none"):
        return 0
    if spec_val == "half":
        return (v + 1) // 2
    if spec_val == "full":
        return v
    n = int(spec_val)
    if not 0 <= n <= v:
        raise ConfigError(f"offload count {n} outside [0, {v}]")
    return n


def cmd_plan(args) -> int:
    cfg = _load_config(args)
    model, hw = _model(cfg), _hardware(cfg)
    costs = _costs(cfg, model, hw)
    sched, d, v, m = _build(cfg, costs)
    k = compute_k(model, hw)
    t_o = offload_round_trip(model, hw)
    n = _offload_count(cfg.get("offload"), v)
    out = cfg["out"]
    name = sched.kind
    plan = None
    warnings = []
    if n:
        block = po_block(d, v, costs)
        stages = select_offload_stages(block, n)
        plan = plan_slots(sched, stages, _t_o_units(model, hw, costs) * sched.units_per_stage)
        if cfg.get("contention") == "switch":
            plan = apply_topology_sync(plan, hw)
        if n == v and k > 1:
            warnings.append(f"full offload exceeds k budget (k={k:.3f} > 1)")
    tl = memory_timeline(sched, model)
    g = (d + 1) // 2
    predictions = {
        "1f1b": d * v, "1f1b-i": d * v + d - 1, "gis": d * v,
        "gis-g": (sched.g or g) * (v - 1) + d, "gis-h": g * (v - 1) + d,
        "po": g * (v - 1) + d,
    }
    summary = {
        "schedule": name, "d": d, "v": v, "m": m, "g": sched.g,
        "k": k, "t_o_seconds": float(t_o),
        "peak_units_rank0": tl.peak(0),
        "peak_bytes_rank0": tl.peak_bytes(0),
        "predicted_peak_units": predictions.get(name),
        "offloaded_stages": list(plan.stages) if plan else [],
        "skip_list": plan.skip_list() if plan else [],
        "warnings": warnings,
    }
    _atomic_write(os.path.join(out, f"{name}.schedule"), emit_schedule(sched))
    if plan:
        _atomic_write(os.path.join(out, f"{name}.plan"), plan.emit())
    _atomic_write(os.path.join(out, f"{name}.json"), json.dumps(summary, indent=2, default=str))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(summary, indent=2, default=str))
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    model, hw = _model(cfg), _hardware(cfg)
    costs = _costs(cfg, model, hw)
    sched, d, v, m = _build(cfg, costs)
    n = _offload_count(cfg.get("offload"), v)
    plan = None
    if n:
        block = po_block(d, v, costs)
        t_o_units = _t_o_units(model, hw, costs) * sched.units_per_stage
        plan = plan_slots(sched, select_offload_stages(block, n), t_o_units)
        if cfg.get("contention") == "switch":
            plan = apply_topology_sync(plan, hw)
    contention = ContentionModel(
        "shared-switch-halving" if cfg.get("contention") == "switch" else "none",
        hw.devices_per_switch,
    )
    try:
        trace = simulate(sched, plan, hw=hw, contention=contention, model=model)
    except DeadlockError as e:
        print(f"deadlock: {e}", file=sys.stderr)
        return 2
    out = cfg["out"]
    summary = trace.summary()
    if plan is not None:
        host_peak = max(host_peak_memory(trace), default=0)
        summary["host_peak_bytes"] = host_peak
        if hw.host_memory_capacity is not None and host_peak > hw.host_memory_capacity:
            msg = (f"host peak {host_peak} bytes exceeds capacity "
                   f"{hw.host_memory_capacity}")
            summary.setdefault("warnings", []).append(msg)
            print(f"warning: {msg}", file=sys.stderr)
    text = json.dumps(summary, indent=2)
    _atomic_write(os.path.join(out, f"{sched.kind}-trace.csv"), trace.to_csv())
    _atomic_write(os.path.join(out, f"{sched.kind}-summary.json"), text)
    print(text)
    return 0


def cmd_verify(args) -> int:
    grid_d = [int(x) for x in (args.grid_d or "2,4,8").split(",") if x]
    grid_v = [int(x) for x in (args.grid_v or "1,2,4").split(",") if x]
    failures = []
    for d in grid_d:
        for v in grid_v:
            rows = analysis.verify_table2(d, v)
            for row in rows:
                status = "ok" if row.ok else "FAIL"
                print(f"d={d} v={v} {row.name:8s} peak={row.peak_units} "
                      f"(want {row.peak_expected}{'' if row.peak_exact else ' max'}) "
                      f"bubble={row.bubble} (want {row.bubble_expected}"
                      f"{'' if row.bubble_exact else ' max'}) {status}")
                if not row.ok:
                    failures.append((d, v, row.name))
            for name, builder in BUILDERS.items():
                if name in ("1f1b-i",) and v < 2:
                    continue
                try:
                    sched = builder(d, v, 4 * d, PassCosts.unit(), g=(d + 1) // 2)
                except ScheduleError:
                    continue
                bad = validate(sched)
                if bad:
                    failures.append((d, v, f"{name}-validate"))
                    print(f"d={d} v={v} {name}: {len(bad)} validation violations FAIL")
    if failures:
        print(f"FAILED rows: {failures}", file=sys.stderr)
        return 1
    print("all rows ok")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    model, hw = _model(cfg), _hardware(cfg)
    costs = _costs(cfg, model, hw)
    s = cfg.get("schedule", {})
    d, v = int(s.get("d", 8)), int(s.get("v", 2))
    m = int(s.get("m", 0) or 4 * d)
    out = cfg["out"]
    if args.study == "reduction":
        k = compute_k(model, hw)
        t_o = Fraction(k).limit_denominator(10**9) * costs.total
        res = analysis.reduction_curve(d, v, m, costs, t_o)
    elif args.study == "scaling":
        totals = [int(x) for x in (args.totals or "8,16,32,64").split(",")]
        res = analysis.scaling_study(totals, ["1f1b", "gis-h", "po", "po-h", "po-f"], costs)
    else:
        raise ConfigError(f"unknown study {args.study!r}")
    _atomic_write(os.path.join(out, f"sweep-{args.study}.csv"), res.to_csv())
    _atomic_write(os.path.join(out, f"sweep-{args.study}.json"), res.to_json())
    print(res.to_csv())
    return 0


def cmd_render(args) -> int:
    try:
        with open(args.schedule_file) as f:
            sched = parse_schedule(f.read())
    except ScheduleError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 1
    passes = list(sched.all_passes())
    if args.plan_file:
        plan_sched = parse_schedule_lines_with_header_optional(args.plan_file)
        passes += plan_sched
    svg = render_svg(passes, memory=memory_timeline(sched) if args.memory else None)
    ascii_art = render_ascii(passes, width=args.width)
    out = args.out or "out"
    base = os.path.splitext(os.path.basename(args.schedule_file))[0]
    _atomic_write(os.path.join(out, f"{base}.svg"), svg)
    print(ascii_art)
    return 0


def parse_schedule_lines_with_header_optional(path: str):
    """Plan files share the pass-line format but carry a different header."""
    from .ir import Pass, PassKind

    passes = []
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ScheduleError(f"{path}:{ln}: expected 6 fields")
            passes.append(
                Pass(PassKind(parts[3]), int(parts[0]), int(parts[1]), int(parts[2]),
                     Fraction(parts[4]), Fraction(parts[5]))
            )
    return passes


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppoff", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--schedule", dest="schedule_kind", choices=SCHEDULES)
        p.add_argument("--d", type=int)
        p.add_argument("--v", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--g", type=int)
        p.add_argument("--offload", help="none | half | full | <count>")
        p.add_argument("--contention", choices=("none", "switch"))
        p.add_argument("--costs", help="tF,tB,tW[,comm]")
        p.add_argument("--preset", help=f"model preset: {', '.join(sorted(PRESETS))}")
        p.add_argument("--out", help="output directory (default: out)")

    p = sub.add_parser("plan", help="build a schedule and offload plan")
    common(p)
    p.set_defaults(func=cmd_plan)
    p = sub.add_parser("simulate", help="simulate a configured schedule")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("verify", help="closed-form checks over the builder grid")
    p.add_argument("--grid-d")
    p.add_argument("--grid-v")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("sweep", help="offload reduction or stage-scaling study")
    common(p)
    p.add_argument("--study", choices=("reduction", "scaling"), default="reduction")
    p.add_argument("--totals", help="comma list of total stage counts (scaling)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("render", help="render a schedule file to SVG + ASCII")
    p.add_argument("schedule_file")
    p.add_argument("--plan-file")
    p.add_argument("--memory", action="store_true")
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScheduleError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
