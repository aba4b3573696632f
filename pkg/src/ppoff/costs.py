"""Model/hardware parameters, activation byte accounting, and pass-cost estimation.

Activation sizes follow the usual transformer accounting: a layer holds 34*b*s*h
bytes of activations at 2-byte precision, reduced to 20*b*s*h when the cheap
layers (LayerNorm, GeLU, dropout mask) are recomputed in the backward pass. The
layer output itself is 2*b*s*h bytes, so the recompute-on activation payload is
ten times the inter-stage traffic. The offload feasibility ratio compares the
host round trip of one stage's activations against that stage's compute time.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

# Coefficients are per element (2-byte baseline), kept rational so other
# element widths scale exactly.
_ACT_FULL = Fraction(34)
_ACT_RECOMPUTE = Fraction(20)
_LAYER_OUTPUT = Fraction(2)


def _frac(x) -> Fraction:
    """Exact Fraction from int/float/str/Fraction input."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)  # float: exact binary value


@dataclass(frozen=True)
class ModelSpec:
    """Transformer shape parameters for one pipeline stage's byte accounting."""

    hidden_size: int
    sequence_length: int
    microbatch_size: int = 1
    layers_per_stage: int = 1
    bytes_per_element: int = 2

    def __post_init__(self):
        for name in ("hidden_size", "sequence_length", "microbatch_size", "layers_per_stage"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.bytes_per_element not in (1, 2, 4):
            raise ValueError("bytes_per_element must be one of 1, 2, 4")


@dataclass(frozen=True)
class HardwareSpec:
    """Machine parameters: compute rate, host link rate, and switch topology."""

    compute_bandwidth: float  # FLOP/s
    transfer_bandwidth: float  # byte/s, one direction of the duplex host link
    p2p_latency: float = 0.0  # seconds per inter-device activation handoff
    devices_per_switch: int = 2
    host_memory_capacity: int | None = None  # bytes

    def __post_init__(self):
        if self.compute_bandwidth <= 0 or self.transfer_bandwidth <= 0:
            raise ValueError("bandwidths must be positive")
        if self.p2p_latency < 0:
            raise ValueError("p2p_latency must be >= 0")
        if self.devices_per_switch < 1:
            raise ValueError("devices_per_switch must be >= 1")


@dataclass(frozen=True)
class PassCosts:
    """Per-stage, per-microbatch pass times (exact rationals)."""

    t_f: Fraction
    t_b: Fraction
    t_w: Fraction
    t_comm: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "t_f", _frac(self.t_f))
        object.__setattr__(self, "t_b", _frac(self.t_b))
        object.__setattr__(self, "t_w", _frac(self.t_w))
        object.__setattr__(self, "t_comm", _frac(self.t_comm))
        if self.t_f < 0 or self.t_b < 0 or self.t_w < 0 or self.t_comm < 0:
            raise ValueError("pass costs must be >= 0")
        if self.t_b + self.t_w <= 0:
            raise ValueError("backward cost must be positive")

    @property
    def total(self) -> Fraction:
        return self.t_f + self.t_b + self.t_w

    @staticmethod
    def unit() -> "PassCosts":
        return PassCosts(Fraction(1), Fraction(1), Fraction(1))


def activation_bytes_per_layer(model: ModelSpec, recompute: bool = False) -> int:
    """Activation bytes held by one transformer layer for one microbatch."""
    coeff = _ACT_RECOMPUTE if recompute else _ACT_FULL
    n = model.microbatch_size * model.sequence_length * model.hidden_size
    out = coeff * n * Fraction(model.bytes_per_element, 2)
    assert out.denominator == 1
    return int(out)


def layer_output_ratio(model: ModelSpec) -> Fraction:
    """Recompute-on activation bytes over layer-output bytes (== 10)."""
    payload = activation_bytes_per_layer(model, recompute=True)
    out = _LAYER_OUTPUT * model.microbatch_size * model.sequence_length * model.hidden_size
    out *= Fraction(model.bytes_per_element, 2)
    return Fraction(payload) / out


def compute_k(model: ModelSpec, hw: HardwareSpec) -> float:
    """Offload feasibility ratio: host round-trip time over stage compute time.

    k <= 1 means a stage's activations can round-trip to the host inside the
    stage's own compute shadow, so full offload costs nothing. Independent of
    microbatch size and layer count; assumes 2-byte elements.
    """
    h, s = model.hidden_size, model.sequence_length
    return 10.0 / (3.0 * (6 * h + s)) * hw.compute_bandwidth / hw.transfer_bandwidth


def offload_round_trip(model: ModelSpec, hw: HardwareSpec) -> Fraction:
    """Round-trip seconds to move one stage's recompute-on activations out and back.

    Counts both directions sequentially: the duplex link runs one direction per
    transfer slot, which is the reading under which the round trip equals
    k * (stage compute time):
        2 * 20bsh * L / B_o == [10 / (3(6h+s)) * B_c/B_o] * [12bsh(6h+s) L / B_c]
    """
    payload = activation_bytes_per_layer(model, recompute=True) * model.layers_per_stage
    return Fraction(2) * payload / _frac(hw.transfer_bandwidth)


def estimate_pass_costs(
    model: ModelSpec,
    hw: HardwareSpec,
    ratios: tuple[float, float, float] = (1, 1, 1),
) -> PassCosts:
    """Pass times from a FLOP model of one stage (F+B+W = 12bsh(6h+s)L FLOPs).

    The F:B:W split is configurable; the default 1:1:1 is a convention, not a
    law -- long sequences skew the three phases apart, so callers may pass
    measured ratios.
    """
    if any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError("ratios must be non-negative with positive sum")
    b, s, h = model.microbatch_size, model.sequence_length, model.hidden_size
    flops = 12 * b * s * h * (6 * h + s) * model.layers_per_stage
    total = Fraction(flops) / _frac(hw.compute_bandwidth)
    denom = _frac(ratios[0]) + _frac(ratios[1]) + _frac(ratios[2])
    return PassCosts(
        t_f=total * _frac(ratios[0]) / denom,
        t_b=total * _frac(ratios[1]) / denom,
        t_w=total * _frac(ratios[2]) / denom,
        t_comm=_frac(hw.p2p_latency),
    )


# Named model shapes usable from the CLI (hidden sizes of the standard ladder).
PRESETS = {
    "5.8B": ModelSpec(hidden_size=4096, sequence_length=4096),
    "10.5B": ModelSpec(hidden_size=5120, sequence_length=4096),
    "18.1B": ModelSpec(hidden_size=6144, sequence_length=4096),
    "42.9B": ModelSpec(hidden_size=8192, sequence_length=4096),
    "66.6B": ModelSpec(hidden_size=10240, sequence_length=4096),
    "83.8B": ModelSpec(hidden_size=10240, sequence_length=4096),
}
