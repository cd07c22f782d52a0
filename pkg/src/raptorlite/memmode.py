"""Mem-mode execution: persistent extended payloads with binary64 shadows.

Values entering a mem-mode scope are boxed: the payload lives at the
scope's target format (which may exceed binary64 precision), a binary64
shadow tracks the operation stream an untruncated run would produce, and
the box is addressed through a Handle whose bit pattern sits in the quiet
nan payload space of a binary64 carrier.  Arithmetic on a handle's bit
pattern therefore surfaces loudly as nan instead of silently computing.

Every operation compares the widened payload against the shadow; relative
deviations beyond the context threshold are flagged and grouped by code
location, which is the numerical-debugging workflow: the flag table is a
heatmap of code locations that do not tolerate the truncation.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from . import softfloat as sf
from .scope import RegionTag, Session, TruncContext
from .softfloat import BINARY64, BigFloat
from .opmode import caller_location, _native_scalar

_QNAN_BASE = 0x7FF8000000000000
_IDENT_MASK = (1 << 51) - 1
_TOMBSTONE_LIMIT = 10_000

# relative deviation floor so a zero shadow cannot blow up the metric
DEVIATION_EPS = 2.0 ** -52


class InvalidHandleError(ValueError):
    """A bit pattern that does not address a live boxed value."""


class CapacityError(RuntimeError):
    """The value table is full; capacity is configurable per session."""


class MemModeError(RuntimeError):
    """Mem-mode operation attempted without an active mem-mode scope."""


@dataclass(frozen=True)
class Handle:
    """Opaque reference to a boxed value, encodable as a binary64 nan."""

    bits: int

    @property
    def ident(self) -> int:
        return self.bits & _IDENT_MASK

    def as_float(self) -> float:
        """The carrier-width encoding; always a quiet nan, never a number."""
        return struct.unpack("<d", struct.pack("<Q", self.bits))[0]


def handle_from_float(x: float) -> Handle:
    """Recover a Handle from its carrier encoding; rejects non-handle patterns."""
    bits = struct.unpack("<Q", struct.pack("<d", x))[0]
    if bits & ~_IDENT_MASK != _QNAN_BASE:
        raise InvalidHandleError("bit pattern 0x%016x is not a boxed-value handle" % bits)
    return Handle(bits)


@dataclass
class ValueRecord:
    """Boxed value: in-format payload, full-precision shadow, provenance."""

    payload: BigFloat
    shadow: float
    origin: str
    last_op: str


@dataclass
class FlagEntry:
    count: int
    max_deviation: float
    first_seen: int


def _active_mem_ctx(session: Session, tag) -> tuple[TruncContext, bool]:
    """Innermost mem-mode context and whether the tag is enabled under it.

    Mem-mode values are boxed, so a disabled (cut-off or excluded) region
    cannot simply run native: it runs its payload arithmetic at binary64
    inside the same scope instead.
    """
    innermost_mem = None
    for guard in reversed(session._stack):
        ctx = guard.context
        if ctx.mode != "mem":
            continue
        if innermost_mem is None:
            innermost_mem = ctx
        if ctx.enabled_for(tag):
            return ctx, True
    if innermost_mem is None:
        raise MemModeError("no active mem-mode scope for this operation")
    return innermost_mem, False


def _lookup(session: Session, h: Handle) -> ValueRecord:
    rec = session.records.get(h.ident)
    if rec is None:
        origin = session._tombstones.get(h.ident)
        if origin is not None:
            raise InvalidHandleError(
                "stale handle %d: record created at %s was released" % (h.ident, origin)
            )
        raise InvalidHandleError("handle %d does not address a live value" % h.ident)
    return rec


def _alloc(session: Session, payload: BigFloat, shadow: float, loc: str) -> Handle:
    if len(session.records) >= session.mem_capacity:
        raise CapacityError(
            "value table full (%d live records; capacity configurable on the session)"
            % len(session.records)
        )
    if session.free_ids:
        ident = session.free_ids.pop()
    else:
        ident = session.next_id
        session.next_id += 1
    session.records[ident] = ValueRecord(payload, shadow, loc, loc)
    return Handle(_QNAN_BASE | ident)


def _payload_fmt(ctx: TruncContext, tag, enabled: bool) -> tuple["sf.FloatFormat", bool]:
    """Target format for a region and whether the op counts as truncated.

    Excluded or predicate-disabled regions run their payloads at binary64
    and are attributed to the full-precision counters.
    """
    if not enabled or (tag is not None and tag.name in ctx.excluded):
        return BINARY64, False
    fmt = ctx.spec.for_width(64)
    if fmt is None:
        return BINARY64, False
    return fmt, True


def pre_convert(session: Session, x: float, tag: RegionTag | None = None,
                loc: str | None = None) -> Handle:
    """Box a carrier value: payload rounded into the format, shadow exact."""
    if loc is None:
        loc = caller_location()
    ctx, enabled = _active_mem_ctx(session, tag)
    fmt, _ = _payload_fmt(ctx, tag, enabled)
    x = float(x)
    payload = sf.round_to_format(sf.from_f64(x), fmt, ctx.subnormals).rounded
    return _alloc(session, payload, x, loc)


def post_convert(session: Session, h: Handle, release: bool = True) -> float:
    """Unbox to the carrier; releases the record unless asked not to."""
    rec = _lookup(session, h)
    out = sf.to_f64(rec.payload)
    if release:
        _release(session, h, rec)
    return out


def release(session: Session, h: Handle) -> None:
    rec = _lookup(session, h)
    _release(session, h, rec)


def _release(session: Session, h: Handle, rec: ValueRecord) -> None:
    del session.records[h.ident]
    session.free_ids.append(h.ident)
    if len(session._tombstones) < _TOMBSTONE_LIMIT:
        session._tombstones[h.ident] = rec.origin
    else:
        session._tombstones.pop(h.ident, None)


def payload_value(session: Session, h: Handle) -> BigFloat:
    """The exact in-format payload (for comparisons; not a carrier value)."""
    return _lookup(session, h).payload


def shadow_value(session: Session, h: Handle) -> float:
    return _lookup(session, h).shadow


def mem_op(session: Session, kind: str, a: Handle, b: Handle | None = None,
           tag: RegionTag | None = None, loc: str | None = None) -> Handle:
    """In-format op on payloads, native op on shadows, deviation check."""
    if loc is None:
        loc = caller_location()
    ctx, enabled = _active_mem_ctx(session, tag)
    fmt, truncating = _payload_fmt(ctx, tag, enabled)
    ra = _lookup(session, a)
    if b is None:
        rep = sf.arith(kind, ra.payload, fmt=fmt, subnormals=ctx.subnormals)
        shadow = _native_scalar(kind, ra.shadow, None)
    else:
        rb = _lookup(session, b)
        rep = sf.arith(kind, ra.payload, rb.payload, fmt=fmt, subnormals=ctx.subnormals)
        shadow = _native_scalar(kind, ra.shadow, rb.shadow)

    if truncating:
        ctx.counters.truncated_flops += 1
    else:
        ctx.counters.full_flops += 1

    session.op_index += 1
    dev = _deviation(rep.rounded, shadow)
    if dev > ctx.threshold:
        entry = session.flag_table.get(loc)
        if entry is None:
            session.flag_table[loc] = FlagEntry(1, dev, session.op_index)
        else:
            entry.count += 1
            entry.max_deviation = max(entry.max_deviation, dev)

    out = _alloc(session, rep.rounded, shadow, loc)
    session.records[out.ident].last_op = loc
    return out


def _deviation(payload: BigFloat, shadow: float) -> float:
    wide = sf.to_f64(payload)
    if math.isnan(wide) and math.isnan(shadow):
        return 0.0
    if not math.isfinite(wide) or not math.isfinite(shadow):
        return 0.0 if wide == shadow else math.inf
    return abs(wide - shadow) / max(abs(shadow), DEVIATION_EPS)


def dump_flags(session: Session):
    """Flagged locations sorted by count (desc), then location for stability."""
    items = [
        (loc, entry.count, entry.max_deviation, entry.first_seen)
        for loc, entry in session.flag_table.items()
    ]
    items.sort(key=lambda t: (-t[1], t[0]))
    return items
