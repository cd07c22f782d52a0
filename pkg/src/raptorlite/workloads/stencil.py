"""Fixed-control-flow heat stencil; the counter-conservation fixture.

Explicit 1D diffusion with pinned endpoints.  Exactly five arithmetic
operations per interior cell per step, so the instrumented op count has the
closed form steps * 5 * (n - 2) regardless of precision or cutoff, and one
load plus one store per cell per step gives 16*n bytes of traffic.  Cells
carry static refinement stripes so cutoff sweeps repartition the same op
total between the truncated and full buckets.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..profiler import SweepRecord, counters_snapshot, l1_error
from ..scope import RegionTag, Session, TruncContext, TruncSpec
from . import backends

OPS_PER_CELL = 5
REGION = "diffuse"


def analytic_flop_count(n: int, steps: int) -> int:
    return steps * OPS_PER_CELL * (n - 2)


def analytic_byte_count(n: int, steps: int) -> int:
    return steps * 16 * n


def stripe_levels(n: int, max_levels: int) -> np.ndarray:
    return 1 + (np.arange(n) * max_levels) // n


def _initial(n: int) -> np.ndarray:
    x = (np.arange(n) + 0.5) / n
    return 1.0 + np.exp(-((x - 0.5) / 0.1) ** 2)


def _evolve(B, n: int, steps: int, r: float, levels: np.ndarray,
            session: Session | None):
    u = B.lift(_initial(n))
    rr = B.const(r)
    two = B.const(2.0)
    inner = levels[1:-1]
    for _ in range(steps):
        B.set_region(REGION, inner)
        mid = B.mul(two, u[1:-1])
        d1 = B.sub(u[:-2], mid)
        lap = B.add(d1, u[2:])
        upd = B.mul(rr, lap)
        new_inner = B.add(u[1:-1], upd)
        u = B.concat([u[:1], new_inner, u[-1:]])
        if session is not None:
            for level in np.unique(levels):
                n_cells = int(np.count_nonzero(levels == level))
                session.record_bytes(16 * n_cells, RegionTag(REGION, int(level)))
    return B.lower(u)


def run_native(n: int, steps: int, r: float = 0.25, max_levels: int = 4) -> np.ndarray:
    return _evolve(backends.NativeArrayOps(), n, steps, r,
                   stripe_levels(n, max_levels), None)


def stencil_run(n, steps, spec: TruncSpec, cutoff: int, session: Session,
                mode: str = "op", r: float = 0.25, max_levels: int = 4,
                threshold: float = 1e-6,
                baseline: np.ndarray | None = None):
    """Run the stencil under a spec/cutoff; returns (field, SweepRecord)."""
    if baseline is None:
        baseline = run_native(n, steps, r, max_levels)
    levels = stripe_levels(n, max_levels)
    ctx = TruncContext(spec, mode=mode, threshold=threshold, regions=(REGION,))
    ctx.set_level_cutoff(max_levels, cutoff)
    start = time.perf_counter()
    with session.scope(ctx):
        B = backends.array_backend(mode, session)
        u = _evolve(B, n, steps, r, levels, session)
    wall = time.perf_counter() - start
    err = l1_error(u, baseline) if np.all(np.isfinite(u)) else math.inf
    fmt = spec.for_width(64)
    record = SweepRecord(
        workload="stencil",
        mode=mode,
        spec=spec.serialize(),
        cutoff_l=cutoff,
        mantissa_bits=fmt.man_bits if fmt else 52,
        exp_bits=fmt.exp_bits if fmt else 11,
        l1_error=err,
        counters=counters_snapshot(session),
        flags_total=sum(e.count for e in session.flag_table.values()),
        wall_seconds=wall,
    )
    return u, record
