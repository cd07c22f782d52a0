"""Newton-Raphson inversion of a tabulated equation of state.

The table holds a smooth free-energy-like surface on a rectangular grid;
lookups interpolate bilinearly and the solver inverts f(x, y0) = target in
x with the derivative taken from the table cell's slope.  Convergence is
judged on the widened values against the full-precision target, so a run
converges only when the truncated arithmetic can actually reach the target
to the requested tolerance; with an aggressive mantissa the interpolant is
quantised far coarser than the tolerance and the iteration never gets
there, which is the failure mode this fixture reproduces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..profiler import SweepRecord, counters_snapshot
from ..scope import Session, TruncContext, TruncSpec
from ..softfloat import FloatFormat
from . import backends

REGION = "eos"

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 20
DERIVATIVE_FLOOR = 1e-12


@dataclass
class EOSTable:
    """Tabulated surface with strictly monotone axes and finite values."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64)
        self.ys = np.asarray(self.ys, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not (np.all(np.diff(self.xs) > 0) and np.all(np.diff(self.ys) > 0)):
            raise ValueError("table axes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("table values must be finite")
        if self.values.shape != (self.xs.size, self.ys.size):
            raise ValueError("table shape does not match axes")

    def locate(self, x: float, axis: np.ndarray) -> int:
        i = int(np.searchsorted(axis, x)) - 1
        return min(max(i, 0), axis.size - 2)


def default_table(nx: int = 48, ny: int = 48) -> EOSTable:
    xs = np.linspace(0.5, 2.5, nx)
    ys = np.linspace(0.5, 2.5, ny)
    vals = xs[:, None] * np.exp(0.35 * xs[:, None]) * (1.0 + 0.25 * ys[None, :])
    return EOSTable(xs, ys, vals)


def bilinear_native(table: EOSTable, x: float, y: float) -> float:
    i = table.locate(x, table.xs)
    j = table.locate(y, table.ys)
    tx = (x - table.xs[i]) / (table.xs[i + 1] - table.xs[i])
    ty = (y - table.ys[j]) / (table.ys[j + 1] - table.ys[j])
    v = table.values
    return float((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                 + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])


def _interp_row(B, table: EOSTable, i: int, j: int, ty_h, one_m_ty_h):
    """f at the two x-nodes of cell i, interpolated in y (instrumented)."""
    v = table.values

    def at(ii):
        lo = B.mul(one_m_ty_h, B.const(v[ii, j]))
        hi = B.mul(ty_h, B.const(v[ii, j + 1]))
        return B.add(lo, hi)

    return at(i), at(i + 1)


def eos_solve(target: float, table: EOSTable, spec: TruncSpec, session: Session,
              mode: str = "op", y: float = 1.3, x0: float = 1.5,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Invert the table in x; returns (root, iterations, converged).

    A derivative below the floor ends the solve as non-converged rather
    than crashing; that is a result, not an error.
    """
    if mode == "native":
        return _solve(backends.scalar_backend("native", None), table, target,
                      y, x0, tol, max_iter)
    ctx = TruncContext(spec, mode=mode, regions=(REGION,))
    with session.scope(ctx):
        return _solve(backends.scalar_backend(mode, session), table, target,
                      y, x0, tol, max_iter)


def _solve(B, table: EOSTable, target: float, y: float, x0: float,
           tol: float, max_iter: int):
    B.set_region(REGION)
    x = B.lift(x0)
    target_h = B.const(target)
    j = table.locate(y, table.ys)
    ty = (y - table.ys[j]) / (table.ys[j + 1] - table.ys[j])
    ty_h = B.const(ty)
    one_m_ty_h = B.const(1.0 - ty)

    xv = float(x0)
    for it in range(1, max_iter + 1):
        i = table.locate(xv, table.xs)
        f_lo, f_hi = _interp_row(B, table, i, j, ty_h, one_m_ty_h)
        # x-interpolation inside cell i
        tx = B.div(B.sub(x, B.const(table.xs[i])),
                   B.const(table.xs[i + 1] - table.xs[i]))
        span = B.sub(f_hi, f_lo)
        fx = B.add(f_lo, B.mul(tx, span))

        if abs(B.value(fx) - target) <= tol:
            return B.value(x), it, True

        df = B.div(span, B.const(table.xs[i + 1] - table.xs[i]))
        if abs(B.value(df)) < DERIVATIVE_FLOOR:
            return B.value(x), it, False
        step = B.div(B.sub(fx, target_h), df)
        x = B.sub(x, step)
        xv = B.value(x)
        if not math.isfinite(xv):
            return xv, it, False
        if xv < table.xs[0] or xv > table.xs[-1]:
            xv = min(max(xv, float(table.xs[0])), float(table.xs[-1]))
            x = B.const(xv)
    return B.value(x), max_iter, False


@dataclass
class EOSCase:
    """The bundled inversion problem used by sweeps and tests."""

    table: EOSTable = field(default_factory=default_table)
    y: float = 1.3
    x_true: float = 1.234567891
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    @property
    def target(self) -> float:
        return bilinear_native(self.table, self.x_true, self.y)


def eos_run(spec: TruncSpec, session: Session, mode: str = "op",
            case: EOSCase | None = None, native_root: float | None = None):
    """One solve as a sweep point; error is the relative root deviation."""
    if case is None:
        case = EOSCase()
    if native_root is None:
        native_root, _, ok = eos_solve(case.target, case.table,
                                       spec, Session("native-eos"), mode="native",
                                       y=case.y, tol=case.tol, max_iter=case.max_iter)
        if not ok:
            raise RuntimeError("full-precision solve failed on the bundled table")
    start = time.perf_counter()
    root, iters, converged = eos_solve(case.target, case.table, spec, session,
                                       mode=mode, y=case.y, tol=case.tol,
                                       max_iter=case.max_iter)
    wall = time.perf_counter() - start
    err = abs(root - native_root) / abs(native_root) if converged else math.inf
    fmt = spec.for_width(64)
    record = SweepRecord(
        workload="eos",
        mode=mode,
        spec=spec.serialize(),
        cutoff_l=0,
        mantissa_bits=fmt.man_bits if fmt else 52,
        exp_bits=fmt.exp_bits if fmt else 11,
        l1_error=err,
        counters=counters_snapshot(session),
        flags_total=sum(e.count for e in session.flag_table.values()),
        wall_seconds=wall,
    )
    return (root, iters, converged), record


def convergence_threshold(mantissas, exp_bits: int = 11, case: EOSCase | None = None,
                          mode: str = "op"):
    """Sweep mantissas; returns ({m: converged}, m*).

    m* is the smallest tested mantissa such that every tested mantissa at
    or above it converged; None when even the largest fails.
    """
    if case is None:
        case = EOSCase()
    results = {}
    for m in sorted(mantissas):
        spec = TruncSpec([(64, FloatFormat(exp_bits, m))])
        _, _, ok = eos_solve(case.target, case.table, spec, Session("eos-m%d" % m),
                             mode=mode, y=case.y, tol=case.tol, max_iter=case.max_iter)
        results[m] = ok
    m_star = None
    for m in sorted(results, reverse=True):
        if results[m]:
            m_star = m
        else:
            break
    return results, m_star
