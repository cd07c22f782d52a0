"""Vectorised binary64 kernels that reproduce the exact engine bit for bit.

Array op-mode runs would be hopeless through per-element integer arithmetic,
so the hot path works on the uint64 views of float64 arrays.  Rounding a
binary64 value into a narrower format is pure bit manipulation: the IEEE
encoding is a self-similar lattice, so clearing low bits plus a carry is a
correct RNE round at any position down to the target quantum's own binade
(below it the only candidates are zero and the quantum itself).

Operations on operands already representable in the target format use the
native binary64 op plus an exactly-known residual:

    add/sub  two_sum        -> exact error term t
    mul      Dekker 2prod   -> exact error term t
    div      q = fl(a/b)    -> sign of a - q*b via 2prod + Sterbenz
    sqrt     s = fl(sqrt a) -> sign of a - s*s the same way

|t| is at most half an ulp of the binary64 result, so the residual can only
matter when the discarded bits sit exactly on the target's halfway point,
and there its sign (or exact zero) decides the tie.  That turns the
double-rounded binary64 result into the correctly rounded target result.
Lanes where the bound does not hold (results near the target's subnormal
range, operands near the binary64 extremes, non-finite results from finite
operands) fall back to the exact scalar engine; workload data never gets
near those guards.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from . import softfloat as sf
from .softfloat import FloatFormat

_SIGN = np.uint64(1 << 63)
_MAG = np.uint64((1 << 63) - 1)
_INF_BITS = np.uint64(0x7FF0000000000000)
_QNAN_BITS = np.uint64(0x7FF8000000000000)

# Dekker splitting constant and the magnitude window in which the
# error-free transforms stay exact (no overflow in split products, no
# sub-lattice error terms).
_SPLIT = 134217729.0  # 2**27 + 1
_HI_LIM = math.ldexp(1.0, 990)
_LO_FLOOR = math.ldexp(1.0, -900)


def _f64_bits(v: float) -> np.uint64:
    return np.uint64(struct.unpack("<Q", struct.pack("<d", v))[0])


def _bits(x: np.ndarray) -> np.ndarray:
    return x.view(np.uint64)


def _canon_nonfinite(x: np.ndarray) -> np.ndarray:
    """Canonicalise nans to the single quiet pattern, keep signed infs."""
    out = x.copy()
    b = _bits(out)
    b[np.isnan(out)] = _QNAN_BITS
    return out


def round_array(x, fmt: FloatFormat, out: np.ndarray | None = None) -> np.ndarray:
    """RNE-round every binary64 lane into fmt. Exact for all inputs.

    Gradual underflow into the target's subnormals; overflow to +/-inf;
    nan payloads canonicalised.  Matches round_to_format lane for lane.
    ``out`` may supply a reusable result buffer of the right shape.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    u = _bits(x)
    mag = u & _MAG
    sign = u & _SIGN
    nan_m = mag > _INF_BITS
    inf_m = mag == _INF_BITS

    biased = (mag >> np.uint64(52)).astype(np.int64)
    e_x = np.where(biased > 0, biased - 1023, -1022)
    s = np.maximum(np.int64(52 - fmt.man_bits), np.int64(52 + fmt.tiny_exp) - e_x)
    s = np.maximum(s, 0)

    # below the quantum's binade the lattice trick stops working; the only
    # representable neighbours are zero and the quantum itself
    tiny = s > 52
    s_u = np.where(tiny, 0, s).astype(np.uint64)
    low = mag & ((np.uint64(1) << s_u) - np.uint64(1))
    half = (np.uint64(1) << s_u) >> np.uint64(1)
    kept = mag >> s_u
    up = (low > half) | ((low == half) & (s_u > 0) & ((kept & np.uint64(1)) > 0))
    mag2 = (kept + up.astype(np.uint64)) << s_u

    if bool(np.any(tiny)):
        quantum = math.ldexp(1.0, fmt.tiny_exp)
        mid_bits = _f64_bits(quantum / 2.0)
        q_bits = _f64_bits(quantum)
        mag2 = np.where(tiny, np.where(mag > mid_bits, q_bits, np.uint64(0)), mag2)

    if fmt.emax < 1023:
        over = (mag2 >> np.uint64(52)).astype(np.int64) > fmt.emax + 1023
        mag2 = np.where(over, _INF_BITS, mag2)

    out_bits = sign | mag2
    out_bits = np.where(inf_m, sign | _INF_BITS, out_bits)
    out_bits = np.where(nan_m, _QNAN_BITS, out_bits)
    res = out_bits.view(np.float64)

    if fmt.emin < -1022 and fmt.man_bits < 52:
        # binary64-subnormal inputs are normal in a wider-exponent target,
        # so their significand position varies per lane; too rare to vectorise
        subn = (biased == 0) & (mag != 0)
        if bool(np.any(subn)):
            idx = np.nonzero(subn)
            vals = x[idx]
            fixed = np.empty_like(vals)
            for i in range(vals.size):
                rep = sf.round_to_format(sf.from_f64(float(vals.flat[i])), fmt)
                fixed.flat[i] = sf.to_f64(rep.rounded)
            res = res.copy()
            res[idx] = fixed
    if out is not None:
        np.copyto(out, res)
        return out
    return res


def _round_result(s: np.ndarray, tsign: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Round binary64 results into fmt with the residual sign breaking ties.

    Callers guarantee every lane is finite and either exactly zero or of
    magnitude at least 2**(emin+2), so the rounding position is the fixed
    normal-range one and the half-ulp residual bound applies.
    """
    shift = 52 - fmt.man_bits
    if shift <= 0:
        return s.copy()
    u = _bits(s)
    mag = u & _MAG
    sign = u & _SIGN
    s_u = np.uint64(shift)
    low = mag & ((np.uint64(1) << s_u) - np.uint64(1))
    half = np.uint64(1) << np.uint64(shift - 1)
    kept = mag >> s_u
    # a positive residual on a negative result moves the magnitude down
    tm = np.where(sign > 0, -tsign, tsign)
    odd = (kept & np.uint64(1)) > 0
    up = (low > half) | ((low == half) & ((tm > 0) | ((tm == 0) & odd)))
    mag2 = (kept + up.astype(np.uint64)) << s_u
    if fmt.emax < 1023:
        over = (mag2 >> np.uint64(52)).astype(np.int64) > fmt.emax + 1023
        mag2 = np.where(over, _INF_BITS, mag2)
    return (sign | mag2).view(np.float64)


def _sgn(t: np.ndarray) -> np.ndarray:
    return (t > 0).astype(np.int8) - (t < 0).astype(np.int8)


def _two_sum(a, b):
    s = a + b
    bb = s - a
    aa = s - bb
    return s, (a - aa) + (b - bb)


def _split(x):
    y = x * _SPLIT
    h = y - (y - x)
    return h, x - h


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def _fallback(kind, a, b, fmt, subnormals=True):
    """Exact scalar path for lanes the vector argument does not cover."""
    out = np.empty_like(a)
    for i in range(a.size):
        ops = (sf.from_f64(float(a.flat[i])),)
        if b is not None:
            ops = ops + (sf.from_f64(float(b.flat[i])),)
        rep = sf.arith(kind, *ops, fmt=fmt, subnormals=subnormals)
        out.flat[i] = sf.to_f64(rep.rounded)
    return out


def _window(*arrays, lo):
    """Lanes whose magnitudes are all zero or inside [lo, 2**990]."""
    ok = None
    for arr in arrays:
        m = np.abs(arr)
        good = (m == 0) | ((m >= lo) & (m <= _HI_LIM))
        ok = good if ok is None else (ok & good)
    return ok


def op_array(kind: str, a, b, fmt: FloatFormat) -> np.ndarray:
    """Correctly rounded array op in fmt; operands must already be in fmt.

    Bit-identical to the scalar engine on every lane.  ``b`` is None for
    sqrt.  Only gradual-underflow semantics run vectorised; abrupt
    underflow goes through the scalar engine.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if b is not None:
        b = np.ascontiguousarray(np.broadcast_to(b, np.broadcast_shapes(a.shape, np.shape(b))), dtype=np.float64)
        a = np.ascontiguousarray(np.broadcast_to(a, b.shape), dtype=np.float64)
    if fmt.man_bits > 52:
        # widening the in-format result back to the carrier is a second
        # rounding that binary64 arithmetic does not reproduce for
        # precisions between 53 and 104 bits; compute exactly instead
        return _fallback(kind, a, b, fmt)
    lo = max(math.ldexp(1.0, fmt.emin + 2), _LO_FLOOR)

    with np.errstate(all="ignore"):
        if kind in ("add", "sub"):
            rhs = -b if kind == "sub" else b
            s, t = _two_sum(a, rhs)
            tsv = _sgn(t)
            fin_in = np.isfinite(a) & np.isfinite(rhs)
            ok = fin_in & np.isfinite(s) & _window(a, rhs, s, lo=lo)
        elif kind == "mul":
            s, t = _two_prod(a, b)
            tsv = _sgn(t)
            fin_in = np.isfinite(a) & np.isfinite(b)
            ok = fin_in & np.isfinite(s) & _window(a, b, s, lo=lo)
        elif kind == "div":
            s = a / b
            qh, ql = _two_prod(s, b)
            sigma = (a - qh) - ql
            tsv = _sgn(sigma) * np.where(np.signbit(b), np.int8(-1), np.int8(1))
            fin_in = np.isfinite(a) & np.isfinite(b)
            ok = fin_in & np.isfinite(s) & (b != 0) & _window(a, b, s, lo=lo)
        elif kind == "sqrt":
            s = np.sqrt(a)
            hh, hl = _two_prod(s, s)
            tsv = _sgn((a - hh) - hl)
            fin_in = np.isfinite(a)
            ok = fin_in & (a >= 0) & np.isfinite(s) & _window(a, s, lo=lo)
        else:
            raise ValueError("unsupported array op %r" % kind)

        res = _round_result(s, tsv, fmt)
        # non-finite results caused by non-finite operands already follow
        # the target's special-value rules
        special = ~fin_in
        out = np.where(special, _canon_nonfinite(s), res)
        need = ~(ok | special)
        if bool(np.any(need)):
            idx = np.nonzero(need)
            out[idx] = _fallback(kind, a[idx], None if b is None else b[idx], fmt)
        return out
