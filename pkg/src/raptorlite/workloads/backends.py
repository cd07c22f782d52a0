"""Execution backends so each workload kernel is written exactly once.

A kernel expresses its arithmetic through a backend object; the native
backend is plain numpy/float, the op-mode backend routes every operation
through the instrumented array/scalar paths, and the mem-mode backend keeps
arrays of boxed-value handles.  Comparisons and selections act on the
values the mode actually computes with (carrier values in op-mode,
payloads in mem-mode), so precision-dependent control flow behaves the way
the mode dictates.
"""

from __future__ import annotations

import numpy as np

from .. import memmode, opmode
from .. import softfloat as sf
from ..opmode import caller_location
from ..scope import RegionTag, Session


class NativeArrayOps:
    """Plain binary64 numpy arithmetic; the uninstrumented reference."""

    instrumented = False

    def __init__(self):
        self._region = ""

    def set_region(self, name, levels=None):
        self._region = name

    def lift(self, x):
        return np.asarray(x, dtype=np.float64).copy()

    def lower(self, x):
        return np.asarray(x, dtype=np.float64)

    def const(self, v):
        return float(v)

    def _bin(self, kind, a, b):
        with np.errstate(all="ignore"):
            return opmode._NATIVE_ARRAY[kind](np.asarray(a, dtype=np.float64),
                                              None if b is None else np.asarray(b, dtype=np.float64))

    def add(self, a, b):
        return self._bin("add", a, b)

    def sub(self, a, b):
        return self._bin("sub", a, b)

    def mul(self, a, b):
        return self._bin("mul", a, b)

    def div(self, a, b):
        return self._bin("div", a, b)

    def sqrt(self, a):
        return self._bin("sqrt", a, None)

    def where(self, cond, x, y):
        return np.where(cond, x, y)

    def less(self, a, b):
        return np.asarray(a) < np.asarray(b)

    def less_equal(self, a, b):
        return np.asarray(a) <= np.asarray(b)

    def greater_equal(self, a, b):
        return np.asarray(a) >= np.asarray(b)

    def minimum(self, a, b):
        return np.where(np.asarray(a) < np.asarray(b), a, b)

    def maximum(self, a, b):
        return np.where(np.asarray(a) > np.asarray(b), a, b)

    def concat(self, parts):
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    def values(self, x):
        return np.asarray(x, dtype=np.float64)


class OpModeArrayOps(NativeArrayOps):
    """Per-operation truncation on arrays; values stay in the carrier."""

    instrumented = True

    def __init__(self, session: Session):
        super().__init__()
        self.session = session
        self._levels = None

    def set_region(self, name, levels=None):
        self._region = name
        self._levels = levels

    def _bin(self, kind, a, b):
        return opmode.array_exec(self.session, kind, a, b, name=self._region,
                                 levels=self._levels, loc=caller_location(2))


class MemModeArrayOps:
    """Arrays of boxed-value handles; payloads persist across operations."""

    instrumented = True

    def __init__(self, session: Session):
        self.session = session
        self._region = ""
        self._levels = None

    def set_region(self, name, levels=None):
        self._region = name
        self._levels = levels

    def _tags(self, n):
        if self._levels is None:
            return [RegionTag(self._region)] * n
        levels = np.broadcast_to(np.asarray(self._levels), (n,))
        return [RegionTag(self._region, int(lv)) for lv in levels]

    def lift(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.empty(x.shape, dtype=object)
        tags = self._tags(x.size)
        for i in range(x.size):
            out.flat[i] = memmode.pre_convert(self.session, float(x.flat[i]), tag=tags[i])
        return out

    def lower(self, x):
        x = np.asarray(x, dtype=object)
        out = np.empty(x.shape, dtype=np.float64)
        for i in range(x.size):
            out.flat[i] = memmode.post_convert(self.session, x.flat[i], release=False)
        return out

    def const(self, v):
        return memmode.pre_convert(self.session, float(v), tag=RegionTag(self._region))

    def _bin(self, kind, a, b):
        loc = caller_location(2)
        scalar_a = isinstance(a, memmode.Handle)
        scalar_b = b is None or isinstance(b, memmode.Handle)
        shape = np.shape(b) if scalar_a else np.shape(a)
        out = np.empty(shape, dtype=object)
        tags = self._tags(out.size)
        for i in range(out.size):
            ha = a if scalar_a else a.flat[i]
            hb = b if scalar_b else b.flat[i]
            out.flat[i] = memmode.mem_op(self.session, kind, ha, hb,
                                         tag=tags[i], loc=loc)
        return out

    def add(self, a, b):
        return self._bin("add", a, b)

    def sub(self, a, b):
        return self._bin("sub", a, b)

    def mul(self, a, b):
        return self._bin("mul", a, b)

    def div(self, a, b):
        return self._bin("div", a, b)

    def sqrt(self, a):
        return self._bin("sqrt", a, None)

    def _payload(self, h):
        return memmode.payload_value(self.session, h)

    def less(self, a, b):
        return self._compare(a, b, lambda x, y: x < y)

    def less_equal(self, a, b):
        return self._compare(a, b, lambda x, y: x <= y)

    def greater_equal(self, a, b):
        return self._compare(a, b, lambda x, y: x >= y)

    def _compare(self, a, b, op):
        a = np.asarray(a, dtype=object)
        if isinstance(b, np.ndarray):
            bs = np.asarray(b, dtype=object)
            get_b = lambda i: self._payload(bs.flat[i])
        elif isinstance(b, memmode.Handle):
            pb = self._payload(b)
            get_b = lambda i: pb
        else:
            pb = sf.from_f64(float(b))
            get_b = lambda i: pb
        out = np.empty(a.shape, dtype=bool)
        for i in range(a.size):
            out.flat[i] = op(self._payload(a.flat[i]), get_b(i))
        return out

    def where(self, cond, x, y):
        return np.where(cond, x, y)

    def minimum(self, a, b):
        return np.where(self.less(a, b), a, b)

    def maximum(self, a, b):
        return np.where(self.less(a, b), b, a)

    def concat(self, parts):
        return np.concatenate([np.asarray(p, dtype=object) for p in parts])

    def values(self, x):
        """Widened payload values, for control decisions and diagnostics."""
        x = np.asarray(x, dtype=object)
        out = np.empty(x.shape, dtype=np.float64)
        for i in range(x.size):
            out.flat[i] = sf.to_f64(self._payload(x.flat[i]))
        return out


# -- scalar backends (root-finding workload) ------------------------------


class NativeScalarOps:
    instrumented = False

    def __init__(self):
        self._region = ""

    def set_region(self, name):
        self._region = name

    def const(self, v):
        return float(v)

    def lift(self, v):
        return float(v)

    def add(self, a, b):
        return opmode._native_scalar("add", a, b)

    def sub(self, a, b):
        return opmode._native_scalar("sub", a, b)

    def mul(self, a, b):
        return opmode._native_scalar("mul", a, b)

    def div(self, a, b):
        return opmode._native_scalar("div", a, b)

    def value(self, x):
        return float(x)


class OpModeScalarOps(NativeScalarOps):
    instrumented = True

    def __init__(self, session: Session):
        super().__init__()
        self.session = session

    def _op(self, kind, a, b):
        return opmode.op_exec(self.session, kind, a, b, tag=RegionTag(self._region),
                              loc=caller_location(2))

    def add(self, a, b):
        return self._op("add", a, b)

    def sub(self, a, b):
        return self._op("sub", a, b)

    def mul(self, a, b):
        return self._op("mul", a, b)

    def div(self, a, b):
        return self._op("div", a, b)


class MemModeScalarOps:
    instrumented = True

    def __init__(self, session: Session):
        self.session = session
        self._region = ""

    def set_region(self, name):
        self._region = name

    def const(self, v):
        return memmode.pre_convert(self.session, float(v), tag=RegionTag(self._region))

    lift = const

    def _op(self, kind, a, b):
        return memmode.mem_op(self.session, kind, a, b, tag=RegionTag(self._region),
                              loc=caller_location(2))

    def add(self, a, b):
        return self._op("add", a, b)

    def sub(self, a, b):
        return self._op("sub", a, b)

    def mul(self, a, b):
        return self._op("mul", a, b)

    def div(self, a, b):
        return self._op("div", a, b)

    def value(self, x):
        return sf.to_f64(memmode.payload_value(self.session, x))


def array_backend(mode: str, session: Session | None):
    if mode == "native" or session is None:
        return NativeArrayOps()
    if mode == "op":
        return OpModeArrayOps(session)
    if mode == "mem":
        return MemModeArrayOps(session)
    raise ValueError("unknown mode %r" % mode)


def scalar_backend(mode: str, session: Session | None):
    if mode == "native" or session is None:
        return NativeScalarOps()
    if mode == "op":
        return OpModeScalarOps(session)
    if mode == "mem":
        return MemModeScalarOps(session)
    raise ValueError("unknown mode %r" % mode)
