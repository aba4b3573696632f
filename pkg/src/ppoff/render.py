"""Gantt rendering of schedules: SVG and ASCII, one row per device.

Transfer passes get their own row under each device. The optional memory
strip draws the per-device residency curve under the pass row.
"""

from __future__ import annotations

from fractions import Fraction

from .ir import MemoryTimeline, Pass, PassKind, Schedule, memory_timeline

_COLORS = {
    PassKind.F: "#4a90d9",
    PassKind.B: "#6fbf73",
    PassKind.W: "#bdbdbd",
    PassKind.OFFLOAD: "#e8a33d",
    PassKind.RELOAD: "#c86bd9",
}
_ASCII = {
    PassKind.F: "F",
    PassKind.B: "B",
    PassKind.W: "W",
    PassKind.OFFLOAD: "o",
    PassKind.RELOAD: "r",
}


def _rows(passes):
    rows: dict[tuple[int, int], list[Pass]] = {}
    for p in passes:
        lane = 1 if p.kind in (PassKind.OFFLOAD, PassKind.RELOAD) else 0
        rows.setdefault((p.device, lane), []).append(p)
    return rows


def render_ascii(passes, width: int = 100) -> str:
    """Character grid: one row per device (plus a transfer row when present)."""
    passes = list(passes)
    if not passes:
        return "(empty schedule)\n"
    t_max = max(p.end for p in passes)
    scale = Fraction(width) / t_max if t_max else Fraction(1)
    rows = _rows(passes)
    out = []
    for (dev, lane) in sorted(rows):
        label = f"d{dev}" + ("*" if lane else " ")
        line = [" "] * (width + 1)
        for p in sorted(rows[(dev, lane)], key=lambda p: p.start):
            a = int(p.start * scale)
            b = max(a + 1, int(p.end * scale))
            ch = _ASCII[p.kind]
            for x in range(a, min(b, width + 1)):
                line[x] = ch
        out.append(f"{label:4s}|{''.join(line)}")
    return "\n".join(out) + "\n"


def render_svg(
    passes,
    memory: MemoryTimeline | None = None,
    px_per_unit: float = 12.0,
    row_height: int = 22,
    label_microbatch: bool = True,
) -> str:
    """Standalone SVG document. Pass rows carry per-kind colors and microbatch
    labels; with a memory timeline, a residency strip follows each device."""
    passes = list(passes)
    rows = _rows(passes)
    devices = sorted({dev for (dev, _lane) in rows})
    t_max = max((p.end for p in passes), default=Fraction(1))
    width = int(float(t_max) * px_per_unit) + 120
    strip = 26 if memory is not None else 0
    lanes_per_dev = {d: (2 if (d, 1) in rows else 1) for d in devices}
    height = 30
    y_of = {}
    for d in devices:
        y_of[d] = height
        height += lanes_per_dev[d] * row_height + strip + 8
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"'
        f' font-family="monospace" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for d in devices:
        y = y_of[d]
        parts.append(f'<text x="4" y="{y + 14}">dev {d}</text>')
        for lane in range(lanes_per_dev[d]):
            for p in sorted(rows.get((d, lane), []), key=lambda p: p.start):
                x = 60 + float(p.start) * px_per_unit
                w = max(1.0, float(p.duration) * px_per_unit - 0.5)
                yy = y + lane * row_height
                parts.append(
                    f'<rect x="{x:.1f}" y="{yy}" width="{w:.1f}" height="{row_height - 4}"'
                    f' fill="{_COLORS[p.kind]}" stroke="#333" stroke-width="0.4"/>'
                )
                if label_microbatch and w > 8:
                    parts.append(
                        f'<text x="{x + w / 2:.1f}" y="{yy + row_height - 9}"'
                        f' text-anchor="middle">{p.microbatch}</text>'
                    )
        if memory is not None and d < memory.devices:
            series = memory.series(d)
            peak = max((u for (_t, u, _b) in series), default=1) or 1
            y0 = y + lanes_per_dev[d] * row_height + strip
            pts = []
            prev_u = 0
            for (t, u, _b) in series:
                x = 60 + float(t) * px_per_unit
                pts.append(f"{x:.1f},{y0 - strip * prev_u / peak:.1f}")
                pts.append(f"{x:.1f},{y0 - strip * u / peak:.1f}")
                prev_u = u
            parts.append(
                f'<polyline points="{" ".join(pts)}" fill="none" stroke="#d9534f" stroke-width="1"/>'
            )
            parts.append(f'<text x="4" y="{y0 - 2}" fill="#d9534f">peak {peak}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_schedule_svg(sched: Schedule, model=None, with_memory: bool = True) -> str:
    mem = memory_timeline(sched, model) if with_memory else None
    return render_svg(list(sched.all_passes()), memory=mem)
