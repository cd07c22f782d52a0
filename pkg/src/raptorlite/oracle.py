"""Independent round-to-nearest-even oracle over exact rationals.

This module deliberately shares no rounding or arithmetic code with the
soft-float engine: values are plain (sign, numerator, denominator) rationals
and rounding works directly on integer quotients.  The selftest enumerates
every finite encoding of a small format, applies add/sub/mul/div exactly as
rationals, rounds here, and compares canonical triples against the engine.
"""

from __future__ import annotations

from .softfloat import FloatFormat

# canonical result forms, comparable against BigFloat._triple()
NAN = ("nan",)


def _inf(sign: int):
    return ("inf", sign)


def _zero(sign: int):
    return ("zero", sign)


def _finite_triple(sign: int, man: int, exp: int):
    shift = (man & -man).bit_length() - 1
    return (sign, man >> shift, exp + shift)


def round_rational(sign: int, num: int, den: int, fmt: FloatFormat):
    """Round the positive rational num/den (sign applied) into fmt, RNE.

    Gradual underflow; overflow to infinity past the largest binade.
    Returns a canonical triple.
    """
    if num == 0:
        return _zero(sign)
    # e = floor(log2(num/den))
    e = num.bit_length() - den.bit_length()
    if (num >> e if e >= 0 else num << -e) < den:
        e -= 1
    q = max(e - fmt.man_bits, fmt.emin - fmt.man_bits)
    # m = round_half_even(num / (den * 2**q))
    if q >= 0:
        n_sc, d_sc = num, den << q
    else:
        n_sc, d_sc = num << -q, den
    m, r = divmod(n_sc, d_sc)
    if 2 * r > d_sc or (2 * r == d_sc and m & 1):
        m += 1
    if m == 0:
        return _zero(sign)
    if q + m.bit_length() - 1 > fmt.emax:
        return _inf(sign)
    return _finite_triple(sign, m, q)


def enumerate_finite(fmt: FloatFormat):
    """Yield every finite encoding of fmt as (triple, sign, num, den).

    Includes both zeros, all subnormals and all normals; denominators are
    powers of two so downstream rational arithmetic stays exact.
    """
    for sign in (1, -1):
        yield _zero(sign), sign, 0, 1
        for frac in range(1, 1 << fmt.man_bits):
            num, exp = frac, fmt.emin - fmt.man_bits
            yield _rational(sign, num, exp), sign, *_num_den(num, exp)
        for e_biased in range(1, (1 << fmt.exp_bits) - 1):
            e = e_biased - fmt.bias
            for frac in range(1 << fmt.man_bits):
                num = (1 << fmt.man_bits) | frac
                exp = e - fmt.man_bits
                yield _rational(sign, num, exp), sign, *_num_den(num, exp)


def _num_den(man: int, exp: int):
    if exp >= 0:
        return man << exp, 1
    return man, 1 << -exp


def _rational(sign: int, man: int, exp: int):
    return _finite_triple(sign, man, exp)


def rational_op(op: str, sa, na, da, sb, nb, db, fmt: FloatFormat):
    """Exact rational op then one rounding; zeros follow the RNE sign rules."""
    if op == "sub":
        sb, op = -sb, "add"
    if op == "add":
        num = sa * na * db + sb * nb * da
        if num == 0:
            if na == 0 and nb == 0 and sa < 0 and sb < 0:
                return _zero(-1)
            return _zero(1)
        return round_rational(1 if num > 0 else -1, abs(num), da * db, fmt)
    sign = sa * sb
    if op == "mul":
        if na == 0 or nb == 0:
            return _zero(sign)
        return round_rational(sign, na * nb, da * db, fmt)
    if op == "div":
        if nb == 0:
            return NAN if na == 0 else _inf(sign)
        if na == 0:
            return _zero(sign)
        return round_rational(sign, na * db, da * nb, fmt)
    raise ValueError("unsupported oracle op %r" % op)
