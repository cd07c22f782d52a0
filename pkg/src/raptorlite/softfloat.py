"""Soft floating point over exact integers, for any exponent/mantissa width.

A finite value is modelled as ``sign * man * 2**exp`` with an unbounded odd
integer mantissa, so every finite value has exactly one representation and
all arithmetic stays exact until the single rounding step into the target
format.  Rounding is round-to-nearest, ties to even.  Gradual underflow into
the target format's subnormals is on by default; an abrupt-underflow switch
gives the MPFR-style alternative (constant precision down to the minimum
exponent, then underflow to zero).

The basic operations (add, sub, mul, div, sqrt, fma) are correctly rounded:
the exact mathematical result is formed in integer arithmetic and rounded
once.  There is never an intermediate binary64 rounding.  Elementary
functions are evaluated through mpmath with ``man_bits + 32`` working bits
and rounded once into the target, which yields faithful rounding (at most
1 ulp), a deliberately weaker contract than the arithmetic core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

__all__ = [
    "FloatFormat",
    "BigFloat",
    "RoundingReport",
    "FormatRangeError",
    "UnimplementedFunctionError",
    "round_to_format",
    "arith",
    "elementary",
    "from_f64",
    "to_f64",
    "BINARY64",
    "BINARY32",
    "BINARY16",
    "FP8",
]

MIN_EXP_BITS, MAX_EXP_BITS = 2, 19
MIN_MAN_BITS, MAX_MAN_BITS = 1, 256

ARITH_OPS = ("add", "sub", "mul", "div", "sqrt", "fma")
ELEMENTARY_FNS = ("exp", "log", "sin", "cos", "pow", "tanh")


class FormatRangeError(ValueError):
    """Exponent or mantissa width outside the supported range."""


class UnimplementedFunctionError(NotImplementedError):
    """Requested elementary function is not part of the supported set."""


@dataclass(frozen=True)
class FloatFormat:
    """An (exponent bits, mantissa bits) precision descriptor.

    ``man_bits`` counts stored fraction bits; the significand has
    ``man_bits + 1`` bits including the implicit leading one.  Exponent
    bias and limits follow the usual IEEE conventions: bias is
    ``2**(exp_bits-1) - 1``, the largest normal binade is ``bias`` and the
    smallest is ``1 - bias``.
    """

    exp_bits: int
    man_bits: int

    def __post_init__(self) -> None:
        if not MIN_EXP_BITS <= self.exp_bits <= MAX_EXP_BITS:
            raise FormatRangeError(
                "exp_bits must be in [%d, %d], got %r"
                % (MIN_EXP_BITS, MAX_EXP_BITS, self.exp_bits)
            )
        if not MIN_MAN_BITS <= self.man_bits <= MAX_MAN_BITS:
            raise FormatRangeError(
                "man_bits must be in [%d, %d], got %r"
                % (MIN_MAN_BITS, MAX_MAN_BITS, self.man_bits)
            )

    @property
    def bias(self) -> int:
        return (1 << (self.exp_bits - 1)) - 1

    @property
    def emax(self) -> int:
        return self.bias

    @property
    def emin(self) -> int:
        return 1 - self.bias

    @property
    def precision(self) -> int:
        return self.man_bits + 1

    @property
    def width(self) -> int:
        return 1 + self.exp_bits + self.man_bits

    @property
    def tiny_exp(self) -> int:
        """Exponent of the smallest positive subnormal (the quantum)."""
        return self.emin - self.man_bits

    def max_finite(self) -> "BigFloat":
        man = (1 << self.precision) - 1
        return BigFloat.finite(1, man, self.emax - self.man_bits)

    def __str__(self) -> str:
        return "(%d,%d)" % (self.exp_bits, self.man_bits)


BINARY64 = FloatFormat(11, 52)
BINARY32 = FloatFormat(8, 23)
BINARY16 = FloatFormat(5, 10)
FP8 = FloatFormat(5, 2)

# value classes
_FINITE, _ZERO, _INF, _NAN = 0, 1, 2, 3


class BigFloat:
    """Exact binary float: ``sign * man * 2**exp`` plus zero/inf/nan.

    The mantissa of a finite non-zero value is kept odd (trailing zeros are
    folded into the exponent), which makes the representation canonical.
    Instances are immutable and safe to share.
    """

    __slots__ = ("sign", "kind", "man", "exp")

    def __init__(self, sign: int, kind: int, man: int, exp: int):
        object.__setattr__(self, "sign", sign)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "man", man)
        object.__setattr__(self, "exp", exp)

    def __setattr__(self, name, value):
        raise AttributeError("BigFloat is immutable")

    # -- constructors -------------------------------------------------

    @classmethod
    def finite(cls, sign: int, man: int, exp: int) -> "BigFloat":
        """Exact value sign * man * 2**exp; man == 0 collapses to +/-0."""
        if man < 0:
            raise ValueError("mantissa must be non-negative")
        if man == 0:
            return cls.zero(sign)
        shift = (man & -man).bit_length() - 1
        if shift:
            man >>= shift
            exp += shift
        return cls(1 if sign >= 0 else -1, _FINITE, man, exp)

    @classmethod
    def zero(cls, sign: int = 1) -> "BigFloat":
        return cls(1 if sign >= 0 else -1, _ZERO, 0, 0)

    @classmethod
    def inf(cls, sign: int = 1) -> "BigFloat":
        return cls(1 if sign >= 0 else -1, _INF, 0, 0)

    @classmethod
    def nan(cls) -> "BigFloat":
        # single canonical quiet nan; payloads are not modelled
        return cls(1, _NAN, 0, 0)

    @classmethod
    def from_float(cls, x: float) -> "BigFloat":
        return from_f64(x)

    @classmethod
    def from_int(cls, n: int) -> "BigFloat":
        return cls.finite(1 if n >= 0 else -1, abs(n), 0)

    # -- predicates ----------------------------------------------------

    @property
    def is_finite(self) -> bool:
        return self.kind in (_FINITE, _ZERO)

    @property
    def is_zero(self) -> bool:
        return self.kind == _ZERO

    @property
    def is_inf(self) -> bool:
        return self.kind == _INF

    @property
    def is_nan(self) -> bool:
        return self.kind == _NAN

    @property
    def binade(self) -> int:
        """Exponent e with 2**e <= |x| < 2**(e+1). Finite non-zero only."""
        if self.kind != _FINITE:
            raise ValueError("binade of a non-finite or zero value")
        return self.exp + self.man.bit_length() - 1

    # -- conversions ---------------------------------------------------

    def as_fraction(self):
        from fractions import Fraction

        if not self.is_finite:
            raise ValueError("only finite values convert to Fraction")
        if self.kind == _ZERO:
            return Fraction(0)
        if self.exp >= 0:
            return Fraction(self.sign * (self.man << self.exp))
        return Fraction(self.sign * self.man, 1 << -self.exp)

    def _triple(self):
        """Canonical (tag, ...) tuple used to compare against oracles."""
        if self.kind == _NAN:
            return ("nan",)
        if self.kind == _INF:
            return ("inf", self.sign)
        if self.kind == _ZERO:
            return ("zero", self.sign)
        return (self.sign, self.man, self.exp)

    # -- comparisons (numeric; nan is unordered) ------------------------

    def _cmp(self, other: "BigFloat") -> int:
        if self.is_nan or other.is_nan:
            raise ValueError("nan is unordered")
        a_sgn = 0 if self.is_zero else self.sign
        b_sgn = 0 if other.is_zero else other.sign
        if a_sgn != b_sgn:
            return -1 if a_sgn < b_sgn else 1
        if a_sgn == 0:
            return 0
        # same non-zero sign
        if self.is_inf or other.is_inf:
            if self.is_inf and other.is_inf:
                return 0
            mag = 1 if self.is_inf else -1
            return mag * a_sgn
        ea, eb = self.binade, other.binade
        if ea != eb:
            return a_sgn * (1 if ea > eb else -1)
        d = self.exp - other.exp
        ma = self.man << d if d >= 0 else self.man
        mb = other.man << -d if d < 0 else other.man
        if ma == mb:
            return 0
        return a_sgn * (1 if ma > mb else -1)

    def __eq__(self, other):
        if not isinstance(other, BigFloat):
            return NotImplemented
        if self.is_nan or other.is_nan:
            return False
        return self._cmp(other) == 0

    def __lt__(self, other):
        if self.is_nan or other.is_nan:
            return False
        return self._cmp(other) < 0

    def __le__(self, other):
        if self.is_nan or other.is_nan:
            return False
        return self._cmp(other) <= 0

    def __gt__(self, other):
        if self.is_nan or other.is_nan:
            return False
        return self._cmp(other) > 0

    def __ge__(self, other):
        if self.is_nan or other.is_nan:
            return False
        return self._cmp(other) >= 0

    def __hash__(self):
        return hash(self._triple())

    def __neg__(self) -> "BigFloat":
        if self.kind == _NAN:
            return self
        return BigFloat(-self.sign, self.kind, self.man, self.exp)

    def __abs__(self) -> "BigFloat":
        if self.kind == _NAN:
            return self
        return BigFloat(1, self.kind, self.man, self.exp)

    def __repr__(self):
        if self.kind == _NAN:
            return "BigFloat(nan)"
        s = "-" if self.sign < 0 else ""
        if self.kind == _INF:
            return "BigFloat(%sinf)" % s
        if self.kind == _ZERO:
            return "BigFloat(%s0)" % s
        return "BigFloat(%s%d * 2**%d)" % (s, self.man, self.exp)


@dataclass(frozen=True)
class RoundingReport:
    """Result of rounding an exact value into a format.

    ``inexact`` is true iff the rounded value differs from the exact result.
    ``overflowed`` marks a finite value that became infinite; ``underflowed``
    marks an inexact result whose magnitude fell below the smallest normal.
    """

    rounded: BigFloat
    inexact: bool = False
    overflowed: bool = False
    underflowed: bool = False


_NAN_REPORT = RoundingReport(BigFloat.nan())


def _cmp_mag_pow2(man: int, exp: int, sticky: bool, k: int) -> int:
    """Compare man*2**exp (+eps if sticky) against 2**k. Returns -1/0/1."""
    d = exp - k
    if d >= 0:
        lhs, rhs = man << d, 1
    else:
        lhs, rhs = man, 1 << -d
    if lhs != rhs:
        return 1 if lhs > rhs else -1
    return 1 if sticky else 0


def _round_finite(sign, man, exp, sticky, fmt, subnormals):
    """Round the magnitude man*2**exp (plus an infinitesimal if sticky).

    Returns (BigFloat, inexact, overflowed, underflowed).  ``sticky`` marks
    a truncated tail strictly between 0 and one unit of man's last place;
    callers producing sticky results must supply at least precision+2
    mantissa bits so the rounding position always lies inside ``man``.
    """
    e = exp + man.bit_length() - 1
    if subnormals:
        q = max(e - fmt.man_bits, fmt.tiny_exp)
    else:
        q = e - fmt.man_bits
    shift = q - exp
    if shift <= 0:
        assert not sticky, "sticky tail below the rounding position"
        kept, inexact, q = man, False, exp
    else:
        low = man & ((1 << shift) - 1)
        kept = man >> shift
        half = 1 << (shift - 1)
        if low > half or (low == half and (sticky or (kept & 1))):
            kept += 1
        inexact = bool(low) or sticky
    if kept == 0:
        return BigFloat.zero(sign), True, False, True
    e_res = q + kept.bit_length() - 1
    if e_res > fmt.emax:
        return BigFloat.inf(sign), True, True, False
    if not subnormals and e_res < fmt.emin:
        # abrupt underflow: nearest of 0 and 2**emin, halfway going to zero
        if _cmp_mag_pow2(man, exp, sticky, fmt.emin - 1) > 0:
            return BigFloat.finite(sign, 1, fmt.emin), True, False, True
        return BigFloat.zero(sign), True, False, True
    under = inexact and e_res < fmt.emin
    return BigFloat.finite(sign, kept, q), inexact, False, under


def round_to_format(x: BigFloat, fmt: FloatFormat, subnormals: bool = True) -> RoundingReport:
    """Round x to the nearest value representable in fmt (RNE).

    Total function: nan propagates (canonicalised), infinities and signed
    zeros pass through, finite values overflow to +/-inf past the format's
    largest binade and underflow gradually unless ``subnormals`` is off.
    """
    if x.kind == _NAN:
        return _NAN_REPORT
    if x.kind in (_INF, _ZERO):
        return RoundingReport(x)
    r, ix, ov, un = _round_finite(x.sign, x.man, x.exp, False, fmt, subnormals)
    return RoundingReport(r, ix, ov, un)


# -- exact helpers for the arithmetic core ------------------------------


def _exact_add(s1, m1, e1, s2, m2, e2):
    """Exact sum of two finite non-zero parts; returns (sign, man, exp) or None for zero."""
    d = e1 - e2
    if d >= 0:
        total = s1 * (m1 << d) + s2 * m2
        exp = e2
    else:
        total = s1 * m1 + s2 * (m2 << -d)
        exp = e1
    if total == 0:
        return None
    return (1 if total > 0 else -1), abs(total), exp


def _add(a: BigFloat, b: BigFloat, fmt, subnormals) -> RoundingReport:
    if a.is_nan or b.is_nan:
        return _NAN_REPORT
    if a.is_inf or b.is_inf:
        if a.is_inf and b.is_inf:
            if a.sign != b.sign:
                return _NAN_REPORT
            return RoundingReport(a)
        return RoundingReport(a if a.is_inf else b)
    if a.is_zero and b.is_zero:
        # RNE: exact cancellation and (+0)+(-0) give +0
        sign = -1 if (a.sign < 0 and b.sign < 0) else 1
        return RoundingReport(BigFloat.zero(sign))
    if a.is_zero:
        return round_to_format(b, fmt, subnormals)
    if b.is_zero:
        return round_to_format(a, fmt, subnormals)
    parts = _exact_add(a.sign, a.man, a.exp, b.sign, b.man, b.exp)
    if parts is None:
        return RoundingReport(BigFloat.zero(1))
    sign, man, exp = parts
    r, ix, ov, un = _round_finite(sign, man, exp, False, fmt, subnormals)
    return RoundingReport(r, ix, ov, un)


def _mul(a: BigFloat, b: BigFloat, fmt, subnormals) -> RoundingReport:
    if a.is_nan or b.is_nan:
        return _NAN_REPORT
    sign = a.sign * b.sign
    if a.is_inf or b.is_inf:
        if a.is_zero or b.is_zero:
            return _NAN_REPORT
        return RoundingReport(BigFloat.inf(sign))
    if a.is_zero or b.is_zero:
        return RoundingReport(BigFloat.zero(sign))
    r, ix, ov, un = _round_finite(sign, a.man * b.man, a.exp + b.exp, False, fmt, subnormals)
    return RoundingReport(r, ix, ov, un)


def _div(a: BigFloat, b: BigFloat, fmt, subnormals) -> RoundingReport:
    if a.is_nan or b.is_nan:
        return _NAN_REPORT
    sign = a.sign * b.sign
    if a.is_inf:
        if b.is_inf:
            return _NAN_REPORT
        return RoundingReport(BigFloat.inf(sign))
    if b.is_inf:
        return RoundingReport(BigFloat.zero(sign))
    if b.is_zero:
        if a.is_zero:
            return _NAN_REPORT
        return RoundingReport(BigFloat.inf(sign))
    if a.is_zero:
        return RoundingReport(BigFloat.zero(sign))
    # quotient with at least precision+2 bits, remainder folded into sticky
    k = fmt.precision + 3 + b.man.bit_length() - a.man.bit_length()
    if k < 0:
        k = 0
    q, r = divmod(a.man << k, b.man)
    res = _round_finite(sign, q, a.exp - k - b.exp, r != 0, fmt, subnormals)
    return RoundingReport(*res)


def _sqrt(a: BigFloat, fmt, subnormals) -> RoundingReport:
    if a.is_nan:
        return _NAN_REPORT
    if a.is_zero:
        return RoundingReport(a)
    if a.sign < 0:
        return _NAN_REPORT
    if a.is_inf:
        return RoundingReport(a)
    m, e = a.man, a.exp
    if e & 1:
        m <<= 1
        e -= 1
    t = fmt.precision + 3
    scaled = m << (2 * t)
    s = math.isqrt(scaled)
    res = _round_finite(1, s, e // 2 - t, s * s != scaled, fmt, subnormals)
    return RoundingReport(*res)


def _fma(a: BigFloat, b: BigFloat, c: BigFloat, fmt, subnormals) -> RoundingReport:
    if a.is_nan or b.is_nan or c.is_nan:
        return _NAN_REPORT
    psign = a.sign * b.sign
    if a.is_inf or b.is_inf:
        if a.is_zero or b.is_zero:
            return _NAN_REPORT
        if c.is_inf and c.sign != psign:
            return _NAN_REPORT
        return RoundingReport(BigFloat.inf(psign))
    if c.is_inf:
        return RoundingReport(c)
    if a.is_zero or b.is_zero:
        return _add(BigFloat.zero(psign), c, fmt, subnormals)
    if c.is_zero:
        r, ix, ov, un = _round_finite(psign, a.man * b.man, a.exp + b.exp, False, fmt, subnormals)
        return RoundingReport(r, ix, ov, un)
    parts = _exact_add(psign, a.man * b.man, a.exp + b.exp, c.sign, c.man, c.exp)
    if parts is None:
        return RoundingReport(BigFloat.zero(1))
    sign, man, exp = parts
    r, ix, ov, un = _round_finite(sign, man, exp, False, fmt, subnormals)
    return RoundingReport(r, ix, ov, un)


def arith(op: str, *operands: BigFloat, fmt: FloatFormat, subnormals: bool = True) -> RoundingReport:
    """Correctly rounded add/sub/mul/div/sqrt/fma in the given format.

    One rounding of the exact result (RNE); division by zero yields a
    signed infinity, 0/0 and invalid sqrt yield nan.  These are value-level
    outcomes, not exceptions.
    """
    if op == "add":
        a, b = operands
        return _add(a, b, fmt, subnormals)
    if op == "sub":
        a, b = operands
        return _add(a, -b, fmt, subnormals)
    if op == "mul":
        a, b = operands
        return _mul(a, b, fmt, subnormals)
    if op == "div":
        a, b = operands
        return _div(a, b, fmt, subnormals)
    if op == "sqrt":
        (a,) = operands
        return _sqrt(a, fmt, subnormals)
    if op == "fma":
        a, b, c = operands
        return _fma(a, b, c, fmt, subnormals)
    raise ValueError("unknown arithmetic operation %r" % op)


# -- elementary functions -----------------------------------------------


def _to_mpf(x: BigFloat):
    return mpmath.mpf((x.sign * x.man, x.exp))


def _from_mpf(y) -> BigFloat:
    if mpmath.isnan(y):
        return BigFloat.nan()
    if mpmath.isinf(y):
        return BigFloat.inf(1 if y > 0 else -1)
    if y == 0:
        return BigFloat.zero(1)
    sign_bit, man, exp, _ = y._mpf_
    return BigFloat.finite(-1 if sign_bit else 1, man, exp)


def _is_odd_integer(x: BigFloat) -> bool:
    return x.kind == _FINITE and x.exp == 0


def _is_integer(x: BigFloat) -> bool:
    return x.is_zero or (x.kind == _FINITE and x.exp >= 0)


def _pow_special(a: BigFloat, b: BigFloat):
    """IEEE-style pow special cases; returns a BigFloat or None for the finite path."""
    if b.is_zero:
        return BigFloat.finite(1, 1, 0)  # pow(x, 0) == 1 including nan/inf bases
    if a.is_nan or b.is_nan:
        return BigFloat.nan()
    if a.is_zero:
        neg = a.sign < 0 and _is_odd_integer(b)
        if b.sign > 0:
            return BigFloat.zero(-1 if neg else 1)
        return BigFloat.inf(-1 if neg else 1)
    if a.is_inf:
        if b.sign > 0:
            return BigFloat.inf(-1 if a.sign < 0 and _is_odd_integer(b) else 1)
        return BigFloat.zero(-1 if a.sign < 0 and _is_odd_integer(b) else 1)
    if b.is_inf:
        one = BigFloat.finite(1, 1, 0)
        mag = abs(a)._cmp(one)
        if mag == 0:
            return one
        grows = (mag > 0) == (b.sign > 0)
        return BigFloat.inf(1) if grows else BigFloat.zero(1)
    if a.sign < 0 and not _is_integer(b):
        return BigFloat.nan()
    return None


def elementary(fn: str, *operands: BigFloat, fmt: FloatFormat, subnormals: bool = True) -> RoundingReport:
    """Faithfully rounded elementary function in the given format.

    Evaluated with man_bits + 32 working bits, then rounded once; the
    result is within 1 ulp of the exact value (not correctly rounded).
    Unsupported names raise UnimplementedFunctionError.
    """
    if fn not in ELEMENTARY_FNS:
        raise UnimplementedFunctionError(
            "elementary function %r is not implemented (supported: %s)"
            % (fn, ", ".join(ELEMENTARY_FNS))
        )
    expected = 2 if fn == "pow" else 1
    if len(operands) != expected:
        raise ValueError("%s takes %d operand(s), got %d" % (fn, expected, len(operands)))
    for x in operands:
        if x.is_nan and fn != "pow":
            return _NAN_REPORT

    a = operands[0]
    if fn == "exp":
        if a.is_inf:
            return RoundingReport(BigFloat.inf(1) if a.sign > 0 else BigFloat.zero(1))
    elif fn == "log":
        if a.is_zero:
            return RoundingReport(BigFloat.inf(-1))
        if a.sign < 0:
            return _NAN_REPORT
        if a.is_inf:
            return RoundingReport(a)
    elif fn in ("sin", "cos"):
        if a.is_inf:
            return _NAN_REPORT
    elif fn == "tanh":
        if a.is_inf:
            return RoundingReport(BigFloat.finite(a.sign, 1, 0))
    elif fn == "pow":
        special = _pow_special(a, operands[1])
        if special is not None:
            if special.kind == _FINITE:
                return round_to_format(special, fmt, subnormals)
            return RoundingReport(special)

    working = max(fmt.man_bits + 32, 53)
    with mpmath.workprec(working):
        if fn == "pow":
            b = operands[1]
            neg = a.sign < 0 and _is_odd_integer(b)
            y = mpmath.power(_to_mpf(abs(a)), _to_mpf(b))
            if neg:
                y = -y
        else:
            y = getattr(mpmath, fn)(_to_mpf(a))
        exact_hint = _from_mpf(y)
    rep = round_to_format(exact_hint, fmt, subnormals)
    if not rep.inexact and fn in ("exp", "log") and _exact_case(fn, a):
        return rep
    # the working-precision evaluation may itself have rounded, so inexact
    # is best-effort: exact only when the intermediate survived unrounded
    # and the case is known exact
    if rep.inexact or not _exact_case(fn, a):
        return RoundingReport(rep.rounded, True, rep.overflowed, rep.underflowed)
    return rep


def _exact_case(fn: str, a: BigFloat) -> bool:
    one = BigFloat.finite(1, 1, 0)
    if fn == "exp":
        return a.is_zero
    if fn == "log":
        return a == one
    if fn in ("sin", "tanh"):
        return a.is_zero
    if fn == "cos":
        return a.is_zero
    return False


# -- binary64 bridging ---------------------------------------------------


def from_f64(x: float) -> BigFloat:
    """Exact conversion from a machine binary64 value."""
    x = float(x)
    if math.isnan(x):
        return BigFloat.nan()
    if math.isinf(x):
        return BigFloat.inf(1 if x > 0 else -1)
    if x == 0.0:
        return BigFloat.zero(-1 if math.copysign(1.0, x) < 0 else 1)
    n, d = x.as_integer_ratio()
    return BigFloat.finite(1 if n > 0 else -1, abs(n), 1 - d.bit_length())


def to_f64(x: BigFloat) -> float:
    """Round into binary64 semantics and return the machine value."""
    r = round_to_format(x, BINARY64).rounded
    if r.kind == _NAN:
        return math.nan
    if r.kind == _INF:
        return math.inf if r.sign > 0 else -math.inf
    if r.kind == _ZERO:
        return 0.0 if r.sign > 0 else -0.0
    return math.ldexp(r.man if r.sign > 0 else -r.man, r.exp)
