"""FPU co-design model: performance density, area split, time and roofline.

The model machine has two FPU blocks, one double-precision and one at the
truncated format, sized so their compute capabilities sit at a configurable
ratio (1:2 by default, a typical double:single split).  Performance density
(throughput per area, normalised to the fp64 unit) comes from published
synthesis results for an open FPU generator at four widths and is
extrapolated to arbitrary widths with a least-squares power law, i.e.
log(density) against log(total bit width); the fitted coefficients ride
along in every report so estimates can be audited.

Execution time is sum(N_i / (A_i * P_i)) over the two precision classes,
with no overlap between units; memory time scales truncated traffic by
width/64; the roofline verdict compares operational intensity against the
machine balance.  Speedups are ratios against the same machine running
everything at double, so the absolute area scale cancels out of them (it
only matters for the compute/memory classification).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .softfloat import BINARY64, FloatFormat

# fp64-equivalent FPU capability per kGE, from the fp64 row below
GFLOPS_PER_KGE_FP64 = 3.17 / 53.0

# default machine: 64 fp64-class FPU instances worth of area, which puts
# the balance point near 0.2 flop/byte at the default 1024 GB/s
DEFAULT_TOTAL_KGE = 64 * 53.0
DEFAULT_BANDWIDTH = 1024e9  # bytes/s
DEFAULT_COMPUTE_RATIO = (1.0, 2.0)  # double : low capability


@dataclass(frozen=True)
class FPUPoint:
    """One published FPU synthesis point."""

    name: str
    format: FloatFormat
    gflops: float
    area_kge: float
    density: float  # published, normalised to the fp64 row

    @property
    def recomputed_density(self) -> float:
        base = _TABLE[0]
        return (self.gflops / self.area_kge) / (base.gflops / base.area_kge)


_TABLE = (
    FPUPoint("fp64", FloatFormat(11, 52), 3.17, 53.0, 1.00),
    FPUPoint("fp32", FloatFormat(8, 23), 6.33, 40.0, 2.65),
    FPUPoint("fp16", FloatFormat(5, 10), 12.67, 29.0, 7.30),
    FPUPoint("fp8", FloatFormat(5, 2), 25.33, 23.0, 18.41),
)


def table5() -> tuple[FPUPoint, ...]:
    """The four published FPU performance-density rows."""
    return _TABLE


def density_fit() -> tuple[float, float]:
    """Least-squares fit of ln(density) = slope * ln(width) + intercept."""
    xs = [math.log(p.format.width) for p in _TABLE]
    ys = [math.log(p.recomputed_density) for p in _TABLE]
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, my - slope * mx


def density_for(fmt: FloatFormat) -> float:
    """Fitted performance density (normalised) at the format's total width."""
    slope, intercept = density_fit()
    return math.exp(intercept + slope * math.log(fmt.width))


def published_density(fmt: FloatFormat):
    """The raw table density when fmt matches a published row, else None."""
    for p in _TABLE:
        if p.format == fmt:
            return p.density
    return None


@dataclass(frozen=True)
class AreaSplit:
    a_dbl: float
    a_low: float

    @property
    def ratio(self) -> float:
        return self.a_dbl / self.a_low


def area_split(p_dbl: float, p_low: float, compute_ratio=DEFAULT_COMPUTE_RATIO) -> AreaSplit:
    """Split unit area so A_dbl*P_dbl : A_low*P_low equals the compute ratio."""
    if p_dbl <= 0 or p_low <= 0:
        raise ValueError("performance densities must be positive")
    r_dbl, r_low = compute_ratio
    a_dbl = r_dbl * p_low / (r_dbl * p_low + r_low * p_dbl)
    return AreaSplit(a_dbl, 1.0 - a_dbl)


@dataclass(frozen=True)
class MachineModel:
    """Two-FPU machine: areas, densities, bandwidth and absolute scale."""

    fmt_low: FloatFormat
    p_dbl: float
    p_low: float
    a_dbl: float
    a_low: float
    bandwidth: float = DEFAULT_BANDWIDTH
    total_kge: float = DEFAULT_TOTAL_KGE

    @property
    def low_is_double(self) -> bool:
        return self.fmt_low == BINARY64

    @property
    def peak_dbl_flops(self) -> float:
        """All-double machine peak, used as the roofline compute ceiling."""
        return self.total_kge * GFLOPS_PER_KGE_FP64 * 1e9

    @property
    def balance(self) -> float:
        """Machine balance point in flop/byte."""
        return self.peak_dbl_flops / self.bandwidth


def build_machine(fmt_low: FloatFormat, bandwidth: float = DEFAULT_BANDWIDTH,
                  compute_ratio=DEFAULT_COMPUTE_RATIO,
                  total_kge: float = DEFAULT_TOTAL_KGE) -> MachineModel:
    p_dbl = density_for(BINARY64)
    p_low = density_for(fmt_low)
    split = area_split(p_dbl, p_low, compute_ratio)
    return MachineModel(fmt_low, p_dbl, p_low, split.a_dbl, split.a_low,
                        bandwidth=bandwidth, total_kge=total_kge)


def compute_time(n_dbl: float, n_low: float, model: MachineModel) -> float:
    """sum(N_i / (A_i * P_i)); units are model-relative.

    Truncation to the binary64 format itself is double-precision work and
    runs on the double unit, so an identity spec costs exactly the
    all-double baseline.
    """
    if model.low_is_double:
        n_dbl, n_low = n_dbl + n_low, 0.0
    t = n_dbl / (model.a_dbl * model.p_dbl)
    if n_low:
        t += n_low / (model.a_low * model.p_low)
    return t


def memory_time(bytes_dbl: float, bytes_low: float, model: MachineModel) -> float:
    """Traffic over bandwidth, truncated traffic scaled by width/64."""
    scaled = bytes_dbl + bytes_low * (model.fmt_low.width / 64.0)
    return scaled / model.bandwidth


def classify(n_total: float, bytes_total: float, model: MachineModel) -> str:
    """Roofline verdict: 'compute' when intensity meets the machine balance."""
    if bytes_total == 0:
        return "compute"
    intensity = n_total / bytes_total
    return "compute" if intensity >= model.balance else "memory"


@dataclass(frozen=True)
class Estimate:
    speedup_compute: float
    speedup_memory: float
    bound_class: str
    fit_slope: float
    fit_intercept: float


def estimate(n_dbl: float, n_low: float, bytes_dbl: float, bytes_low: float,
             model: MachineModel) -> Estimate:
    """Speedup of the mixed run against the same machine running all-double."""
    n_total = n_dbl + n_low
    bytes_total = bytes_dbl + bytes_low
    base_c = compute_time(n_total, 0.0, model)
    mixed_c = compute_time(n_dbl, n_low, model)
    speed_c = 1.0 if n_total == 0 else base_c / mixed_c
    base_m = memory_time(bytes_total, 0.0, model)
    mixed_m = memory_time(bytes_dbl, bytes_low, model)
    speed_m = 1.0 if bytes_total == 0 else base_m / mixed_m
    slope, intercept = density_fit()
    return Estimate(speed_c, speed_m, classify(n_total, bytes_total, model),
                    slope, intercept)
