from fractions import Fraction

import pytest

from ppoff.analysis import compare, reduction_curve, scaling_study, verify_table2
from ppoff.builders import build_gis, build_gis_h, build_interleaved_1f1b
from ppoff.costs import PassCosts
from ppoff.sim import bubble_time, simulate

UNIT = PassCosts.unit()


def test_verify_table2_reference_config():
    rows = verify_table2(8, 2)
    assert all(row.ok for row in rows), [r for r in rows if not r.ok]
    names = {row.name for row in rows}
    assert {"1f1b", "1f1b-i", "gis", "gis-h", "po", "po-h", "po-f"} <= names


@pytest.mark.parametrize("d", (2, 4, 8))
@pytest.mark.parametrize("v", (1, 2, 4))
def test_verify_table2_exact_rows_across_grid(d, v):
    rows = {row.name: row for row in verify_table2(d, v)}
    for name in ("1f1b", "gis"):
        assert rows[name].ok, rows[name]
    if v >= 2:
        assert rows["1f1b-i"].ok


def test_gis_and_interleaved_bubbles_coincide_when_w_free():
    costs = PassCosts(1, 1, 0)
    d, v = 2, 2  # the closed forms (d-1)(tf+tb+tw) and (d-1)(tf+tb) meet at tw=0
    b_gis = bubble_time(simulate(build_gis(d, v, 4 * d, costs)))[0]
    b_int = bubble_time(simulate(build_interleaved_1f1b(d, v, 4 * d, costs)))[0]
    assert b_gis == b_int == (d - 1) * 2


def test_reduction_curve_shape():
    res = reduction_curve(8, 2, 32, UNIT, Fraction(1, 2) * UNIT.total)
    pts = {p["n_offloaded"]: p for p in res.points}
    assert pts[0]["ratio_self"] == 1.0
    assert abs(pts[1]["peak_units"] - 4) <= 1  # half offload: about a quarter of dv=16
    v = 2
    p0, pv = pts[0]["peak_units"], pts[v]["peak_units"]
    for n in range(1, v):
        chord = (p0 * (v - n) + pv * n) / v
        assert pts[n]["peak_units"] <= chord
    assert res.config_hash == reduction_curve(8, 2, 32, UNIT, Fraction(1, 2) * UNIT.total).config_hash


def test_reduction_curve_gis_h_variant():
    res = reduction_curve(4, 2, 16, UNIT, Fraction(1, 2) * UNIT.total, kind="gis-h")
    assert res.points[0]["ratio_self"] == 1.0
    assert res.points[-1]["peak_units"] <= res.points[0]["peak_units"]


def test_scaling_study_po_f_constant_and_interleaved_grows():
    res = scaling_study([8, 16, 32, 64], ["po-f", "1f1b-i"], UNIT)
    po = [p for p in res.points if p["kind"] == "po-f"]
    il = [p for p in res.points if p["kind"] == "1f1b-i"]
    assert len({p["peak_units"] for p in po}) == 1
    assert po[0]["peak_units"] <= 6
    grows = [p["peak_units"] for p in sorted(il, key=lambda x: x["total_stages"])]
    assert grows == sorted(grows) and grows[-1] > grows[0]
    # interleaved peak is dv + d - 1 at its reported factorization
    for p in il:
        assert p["peak_units"] == p["total_stages"] + p["d"] - 1


def test_compare_dominance():
    gis = build_gis(8, 2, 16, UNIT)
    inter = build_interleaved_1f1b(8, 2, 16, UNIT)
    out = compare(gis, inter)
    assert out["verdict"] == "a-dominates"
    assert compare(gis, gis)["verdict"] == "tie"
    gish = build_gis_h(8, 2, 16, UNIT)
    assert compare(gish, gis)["verdict"] == "trade"


def test_sweep_serialization():
    res = reduction_curve(4, 2, 8, UNIT, Fraction(1, 2) * UNIT.total)
    csv_text = res.to_csv()
    assert csv_text.splitlines()[0].startswith("n_offloaded")
    assert len(csv_text.splitlines()) == 1 + len(res.points)
    assert "config_hash" in res.to_json()


@pytest.mark.parametrize("v", (4, 8))
def test_reduction_curve_convex_other_v(v):
    res = reduction_curve(8, v, 16, UNIT, Fraction(1, 2) * UNIT.total)
    pts = [p["peak_units"] for p in res.points]
    p0, pv = pts[0], pts[-1]
    for n in range(1, v):
        assert pts[n] * v <= p0 * (v - n) + pv * n
