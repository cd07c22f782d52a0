"""Op-mode execution: round operands in, compute in-format, expand back.

Every instrumented operation rounds its binary64 operands into the active
format, performs the correctly rounded operation there, and widens the
result back to binary64, so values between operations always live in the
carrier type.  The local error of each operation is recorded against the
native binary64 result of the same operands; with no enabled scope the
native op runs and is counted as full precision.

Scalar operations go through the exact integer engine; array operations go
through the vectorised kernels, which are bit-identical to it.  Code
locations are taken from the caller (file:line) unless supplied.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import softfloat as sf
from . import vecops
from .scope import RegionTag, Session

ARRAY_KINDS = ("add", "sub", "mul", "div", "sqrt")


@dataclass
class StatLine:
    """Accumulated local-error statistics for one (kind, location)."""

    count: int = 0
    sum_abs: float = 0.0
    max_abs: float = 0.0
    sum_rel: float = 0.0
    max_rel: float = 0.0

    def snapshot(self) -> "StatLine":
        return StatLine(self.count, self.sum_abs, self.max_abs, self.sum_rel, self.max_rel)


def caller_location(depth: int = 1) -> str:
    frame = sys._getframe(depth + 1)
    return "%s:%d" % (os.path.basename(frame.f_code.co_filename), frame.f_lineno)


def _native_scalar(kind: str, a: float, b) -> float:
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "div":
        if b == 0.0:
            if a == 0.0 or math.isnan(a) or math.isnan(b):
                return math.nan
            return math.copysign(math.inf, a) * math.copysign(1.0, b)
        try:
            return a / b
        except OverflowError:
            return math.copysign(math.inf, a) * math.copysign(1.0, b)
    if kind == "sqrt":
        if a < 0.0:
            return math.nan
        return math.sqrt(a)
    raise ValueError("unknown op kind %r" % kind)


_NATIVE_ARRAY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.true_divide,
    "sqrt": lambda a, b: np.sqrt(a),
}


def _record(ctx, kind: str, loc: str, count: int, diffs, natives) -> None:
    line = ctx.stats.get((kind, loc))
    if line is None:
        line = StatLine()
        ctx.stats[(kind, loc)] = line
    line.count += count
    if count == 0:
        return
    d = np.abs(np.atleast_1d(np.asarray(diffs, dtype=np.float64)))
    n = np.abs(np.atleast_1d(np.asarray(natives, dtype=np.float64)))
    with np.errstate(all="ignore"):
        rel = np.where(d == 0.0, 0.0, np.where(n == 0.0, np.inf, d / n))
    line.sum_abs += float(np.sum(d))
    line.max_abs = max(line.max_abs, float(np.max(d)))
    line.sum_rel += float(np.sum(rel))
    line.max_rel = max(line.max_rel, float(np.max(rel)))


def op_exec(session: Session, kind: str, a: float, b=None, tag: RegionTag | None = None,
            width: int = 64, loc: str | None = None) -> float:
    """One instrumented scalar operation under the session's active scope."""
    if loc is None:
        loc = caller_location()
    a = float(a)
    if b is not None:
        b = float(b)
    native = _native_scalar(kind, a, b)
    ctx = session.resolve(tag)
    fmt = None if ctx is None else ctx.spec.for_width(width)
    if fmt is None:
        session.root_counters.full_flops += 1
        return native
    sub = ctx.subnormals
    ra = sf.round_to_format(sf.from_f64(a), fmt, sub).rounded
    if b is None:
        rep = sf.arith(kind, ra, fmt=fmt, subnormals=sub)
    else:
        rb = sf.round_to_format(sf.from_f64(b), fmt, sub).rounded
        rep = sf.arith(kind, ra, rb, fmt=fmt, subnormals=sub)
    out = sf.to_f64(rep.rounded)
    ctx.counters.truncated_flops += 1
    diff = abs(out - native) if math.isfinite(out) and math.isfinite(native) else (
        0.0 if out == native or (math.isnan(out) and math.isnan(native)) else math.inf
    )
    _record(ctx, kind, loc, 1, [diff], [native])
    return out


def math_exec(session: Session, fn: str, a: float, b=None, tag: RegionTag | None = None,
              width: int = 64, loc: str | None = None) -> float:
    """Instrumented elementary function call; sqrt uses the arith path."""
    if loc is None:
        loc = caller_location()
    if fn == "sqrt":
        return op_exec(session, "sqrt", a, tag=tag, width=width, loc=loc)
    if fn not in sf.ELEMENTARY_FNS:
        raise sf.UnimplementedFunctionError(
            "elementary function %r is not implemented (supported: sqrt, %s)"
            % (fn, ", ".join(sf.ELEMENTARY_FNS))
        )
    a = float(a)
    operands_native = (a,) if b is None else (a, float(b))
    native = _native_elementary(fn, *operands_native)
    ctx = session.resolve(tag)
    fmt = None if ctx is None else ctx.spec.for_width(width)
    if fmt is None:
        session.root_counters.full_flops += 1
        return native
    sub = ctx.subnormals
    rounded_ops = tuple(
        sf.round_to_format(sf.from_f64(x), fmt, sub).rounded for x in operands_native
    )
    rep = sf.elementary(fn, *rounded_ops, fmt=fmt, subnormals=sub)
    out = sf.to_f64(rep.rounded)
    ctx.counters.truncated_flops += 1
    diff = abs(out - native) if math.isfinite(out) and math.isfinite(native) else (
        0.0 if out == native or (math.isnan(out) and math.isnan(native)) else math.inf
    )
    _record(ctx, fn, loc, 1, [diff], [native])
    return out


def _native_elementary(fn: str, a: float, b=None) -> float:
    try:
        if fn == "pow":
            return math.pow(a, b)
        return getattr(math, fn)(a)
    except OverflowError:
        return math.inf
    except ValueError:
        return math.nan


def array_exec(session: Session, kind: str, a, b=None, name: str = "",
               levels=None, width: int = 64, loc: str | None = None) -> np.ndarray:
    """One instrumented array operation; lanes may carry refinement levels.

    ``levels`` is None (one region tag for the whole array) or an integer
    array of per-lane levels; lanes resolve to contexts independently, so a
    level cutoff splits one call into truncated and full-precision lanes.
    """
    if kind not in ARRAY_KINDS:
        raise ValueError("unsupported array op %r" % kind)
    if loc is None:
        loc = caller_location()
    a = np.asarray(a, dtype=np.float64)
    if b is not None:
        shape = np.broadcast_shapes(a.shape, np.shape(b))
        a = np.broadcast_to(a, shape)
        b = np.broadcast_to(np.asarray(b, dtype=np.float64), shape)
    with np.errstate(all="ignore"):
        native = _NATIVE_ARRAY[kind](a, b)

    if levels is None:
        groups = [(session.resolve(RegionTag(name)), None)]
    else:
        levels = np.broadcast_to(np.asarray(levels), native.shape)
        groups = []
        for lv in np.unique(levels):
            ctx = session.resolve(RegionTag(name, int(lv)))
            groups.append((ctx, levels == lv))

    out = native.copy()
    for ctx, mask in groups:
        count = int(native.size if mask is None else np.count_nonzero(mask))
        if count == 0:
            continue
        fmt = None if ctx is None else ctx.spec.for_width(width)
        if fmt is None:
            session.root_counters.full_flops += count
            continue
        sel = (slice(None),) if mask is None else np.nonzero(mask)
        asub = a[sel] if mask is not None else a
        bsub = None if b is None else (b[sel] if mask is not None else b)
        if ctx.subnormals:
            # rounded operands are internal temporaries, so they live in the
            # context's reusable buffer pool (no steady-state growth)
            shape = np.shape(asub)
            ra = vecops.round_array(asub, fmt, out=ctx.scratch(("ra", shape), shape, np.float64))
            rb = None
            if bsub is not None:
                rb = vecops.round_array(bsub, fmt, out=ctx.scratch(("rb", shape), shape, np.float64))
            tr = vecops.op_array(kind, ra, rb, fmt)
        else:
            tr = _scalar_block(kind, asub, bsub, fmt, subnormals=False)
        if mask is None:
            out = tr
            nat = native
        else:
            out[sel] = tr
            nat = native[sel]
        ctx.counters.truncated_flops += count
        with np.errstate(all="ignore"):
            diff = np.abs(tr - nat)
            bothnan = np.isnan(tr) & np.isnan(nat)
            diff = np.where(bothnan | (tr == nat), 0.0, diff)
            diff = np.where(np.isnan(diff), np.inf, diff)
        _record(ctx, kind, loc, count, diff, nat)
    return out


def _scalar_block(kind, a, b, fmt, subnormals):
    out = np.empty_like(np.asarray(a, dtype=np.float64))
    flat_a = np.asarray(a, dtype=np.float64).ravel()
    flat_b = None if b is None else np.asarray(b, dtype=np.float64).ravel()
    res = out.ravel()
    for i in range(flat_a.size):
        ra = sf.round_to_format(sf.from_f64(float(flat_a[i])), fmt, subnormals).rounded
        if flat_b is None:
            rep = sf.arith(kind, ra, fmt=fmt, subnormals=subnormals)
        else:
            rb = sf.round_to_format(sf.from_f64(float(flat_b[i])), fmt, subnormals).rounded
            rep = sf.arith(kind, ra, rb, fmt=fmt, subnormals=subnormals)
        res[i] = sf.to_f64(rep.rounded)
    return out


def drain_stats(session: Session) -> dict:
    """Consistent snapshot of per-(kind, location) stats; accumulation continues."""
    merged: dict = {}
    for ctx in session.context_registry:
        for key, line in ctx.stats.items():
            if key in merged:
                m = merged[key]
                m.count += line.count
                m.sum_abs += line.sum_abs
                m.max_abs = max(m.max_abs, line.max_abs)
                m.sum_rel += line.sum_rel
                m.max_rel = max(m.max_rel, line.max_rel)
            else:
                merged[key] = line.snapshot()
    return merged
