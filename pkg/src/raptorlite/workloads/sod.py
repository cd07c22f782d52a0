"""1D Sod shock tube: Godunov scheme with an HLL flux, instrumented.

The exact Riemann solution of the tube gives an analytic reference, so
scheme validation needs no external code.  Refinement levels mimic a mesh
hierarchy at per-cell granularity: each step, cells are tagged from the
density gradient of the exact solution at the current time (steep features
get the finest level, with a dilation buffer around them), which keeps the
tagging independent of the precision under test.  The timestep is fixed by
default, computed once from a signal-speed bound, so the instrumented op
stream has precision-independent control flow; an adaptive-dt switch exists
to demonstrate (not assert) timestep compensation effects.

The sweep error is the normalised L1 distance of the final density against
the untruncated run of the same scheme; the exact solution is returned
alongside for physical validation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..profiler import SweepRecord, counters_snapshot, l1_error
from ..scope import RegionTag, Session, TruncContext, TruncSpec
from . import backends

GAMMA = 1.4
LEFT = (1.0, 0.0, 1.0)     # rho, u, p
RIGHT = (0.125, 0.0, 0.1)

REGIONS = ("prim", "flux", "update")


@dataclass
class SodParams:
    cells: int = 400
    t_end: float = 0.2
    cfl: float = 0.8
    max_levels: int = 4
    signal_bound: float = 3.0   # covers the fastest wave of the standard tube
    adaptive_dt: bool = False
    threshold: float = 1e-6     # mem-mode deviation threshold

    def __post_init__(self):
        if self.cells < 50:
            raise ValueError("need at least 50 cells, got %d" % self.cells)

    @property
    def dx(self) -> float:
        return 1.0 / self.cells

    def grid(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.dx

    def fixed_dt(self) -> tuple[float, int]:
        dt = self.cfl * self.dx / self.signal_bound
        steps = max(1, math.ceil(self.t_end / dt))
        return self.t_end / steps, steps


# -- exact Riemann solution ----------------------------------------------


def _pressure_fn(p, rho_k, p_k, gamma):
    if p > p_k:  # shock branch
        a = 2.0 / ((gamma + 1.0) * rho_k)
        b = (gamma - 1.0) / (gamma + 1.0) * p_k
        f = (p - p_k) * math.sqrt(a / (p + b))
        df = math.sqrt(a / (p + b)) * (1.0 - (p - p_k) / (2.0 * (p + b)))
    else:  # rarefaction branch
        c = math.sqrt(gamma * p_k / rho_k)
        f = 2.0 * c / (gamma - 1.0) * ((p / p_k) ** ((gamma - 1.0) / (2.0 * gamma)) - 1.0)
        df = 1.0 / (rho_k * c) * (p / p_k) ** (-(gamma + 1.0) / (2.0 * gamma))
    return f, df


def star_state(left=LEFT, right=RIGHT, gamma=GAMMA):
    """Pressure and velocity in the star region (Newton iteration)."""
    rho_l, u_l, p_l = left
    rho_r, u_r, p_r = right
    c_l = math.sqrt(gamma * p_l / rho_l)
    c_r = math.sqrt(gamma * p_r / rho_r)
    du = u_r - u_l
    # two-rarefaction initial guess
    z = (gamma - 1.0) / (2.0 * gamma)
    p = ((c_l + c_r - 0.5 * (gamma - 1.0) * du) /
         (c_l / p_l ** z + c_r / p_r ** z)) ** (1.0 / z)
    for _ in range(60):
        f_l, df_l = _pressure_fn(p, rho_l, p_l, gamma)
        f_r, df_r = _pressure_fn(p, rho_r, p_r, gamma)
        g = f_l + f_r + du
        step = g / (df_l + df_r)
        p_new = max(p - step, 1e-14)
        if abs(p_new - p) <= 1e-14 * max(p, p_new):
            p = p_new
            break
        p = p_new
    f_l, _ = _pressure_fn(p, rho_l, p_l, gamma)
    f_r, _ = _pressure_fn(p, rho_r, p_r, gamma)
    u = 0.5 * (u_l + u_r) + 0.5 * (f_r - f_l)
    return p, u


def exact_density(x, t, left=LEFT, right=RIGHT, gamma=GAMMA, x0=0.5):
    """Exact-solution density sampled at positions x and time t."""
    x = np.asarray(x, dtype=np.float64)
    if t <= 0.0:
        return np.where(x < x0, left[0], right[0])
    p_star, u_star = star_state(left, right, gamma)
    xi = (x - x0) / t
    rho_l, u_l, p_l = left
    rho_r, u_r, p_r = right
    c_l = math.sqrt(gamma * p_l / rho_l)
    c_r = math.sqrt(gamma * p_r / rho_r)
    gp = gamma + 1.0
    gm = gamma - 1.0

    rho = np.empty_like(xi)
    left_side = xi <= u_star

    if p_star > p_l:  # left shock
        s_l = u_l - c_l * math.sqrt(gp / (2 * gamma) * p_star / p_l + gm / (2 * gamma))
        rho_star_l = rho_l * ((p_star / p_l + gm / gp) / (gm / gp * p_star / p_l + 1.0))
        rho = np.where(xi < s_l, rho_l, rho_star_l)
    else:  # left rarefaction
        c_star_l = c_l * (p_star / p_l) ** (gm / (2 * gamma))
        head, tail = u_l - c_l, u_star - c_star_l
        c_fan = np.maximum((2.0 / gp) * (c_l + 0.5 * gm * (u_l - xi)), 0.0)
        rho_fan = rho_l * (c_fan / c_l) ** (2.0 / gm)
        rho_star_l = rho_l * (p_star / p_l) ** (1.0 / gamma)
        rho = np.where(xi < head, rho_l, np.where(xi > tail, rho_star_l, rho_fan))

    if p_star > p_r:  # right shock
        s_r = u_r + c_r * math.sqrt(gp / (2 * gamma) * p_star / p_r + gm / (2 * gamma))
        rho_star_r = rho_r * ((p_star / p_r + gm / gp) / (gm / gp * p_star / p_r + 1.0))
        right_rho = np.where(xi > s_r, rho_r, rho_star_r)
    else:  # right rarefaction
        c_star_r = c_r * (p_star / p_r) ** (gm / (2 * gamma))
        head, tail = u_r + c_r, u_star + c_star_r
        c_fan = np.maximum((2.0 / gp) * (c_r - 0.5 * gm * (u_r - xi)), 0.0)
        rho_fan = rho_r * (c_fan / c_r) ** (2.0 / gm)
        rho_star_r = rho_r * (p_star / p_r) ** (1.0 / gamma)
        right_rho = np.where(xi > head, rho_r, np.where(xi < tail, rho_star_r, rho_fan))

    return np.where(left_side, rho, right_rho)


# -- pseudo-AMR tagging ---------------------------------------------------


def tag_levels(rho_ref: np.ndarray, max_levels: int, dilate: int = 3) -> np.ndarray:
    """Per-cell refinement level from the reference density gradient.

    Steeper features get finer (higher) levels; a max filter widens each
    band the way refinement buffers do around flagged mesh blocks.
    """
    g = np.abs(np.diff(rho_ref))
    cell_g = np.zeros_like(rho_ref)
    cell_g[:-1] = np.maximum(cell_g[:-1], g)
    cell_g[1:] = np.maximum(cell_g[1:], g)
    top = cell_g.max()
    levels = np.ones(rho_ref.shape, dtype=np.int64)
    if top > 0.0:
        gn = cell_g / top
        for k in range(2, max_levels + 1):
            levels = np.where(gn >= 8.0 ** (k - max_levels - 1), k, levels)
    if dilate > 0:
        out = levels.copy()
        for s in range(1, dilate + 1):
            out[s:] = np.maximum(out[s:], levels[:-s])
            out[:-s] = np.maximum(out[:-s], levels[s:])
        levels = out
    return levels


# -- the instrumented scheme ----------------------------------------------


def _initial_state(x):
    rho = np.where(x < 0.5, LEFT[0], RIGHT[0])
    u = np.where(x < 0.5, LEFT[1], RIGHT[1])
    p = np.where(x < 0.5, LEFT[2], RIGHT[2])
    mom = rho * u
    ene = p / (GAMMA - 1.0) + 0.5 * rho * u * u
    return rho, mom, ene


def _evolve(B, params: SodParams, session: Session | None):
    x = params.grid()
    rho0, mom0, ene0 = _initial_state(x)
    dt, steps = params.fixed_dt()
    dtdx_val = dt / params.dx

    B.set_region("prim")
    rho, mom, ene = B.lift(rho0), B.lift(mom0), B.lift(ene0)
    gm1 = B.const(GAMMA - 1.0)
    gam = B.const(GAMMA)
    half = B.const(0.5)
    dtdx = B.const(dtdx_val)
    zero = 0.0

    t = 0.0
    for _ in range(steps):
        lv = tag_levels(exact_density(x, t), params.max_levels)
        lv_pad = np.concatenate([lv[:1], lv, lv[-1:]])
        lv_iface = np.maximum(lv_pad[:-1], lv_pad[1:])

        if params.adaptive_dt:
            # timestep from the evolving (possibly truncated) state; this
            # makes control flow precision-dependent on purpose
            rv, mv, ev = B.values(rho), B.values(mom), B.values(ene)
            uu = mv / rv
            pp = (GAMMA - 1.0) * (ev - 0.5 * rv * uu * uu)
            smax = float(np.max(np.abs(uu) + np.sqrt(np.abs(GAMMA * pp / rv))))
            dt = params.cfl * params.dx / max(smax, 1e-12)
            dt = min(dt, params.t_end - t)
            dtdx = B.const(dt / params.dx)

        # transmissive ghost cells
        rho_p = B.concat([rho[:1], rho, rho[-1:]])
        mom_p = B.concat([mom[:1], mom, mom[-1:]])
        ene_p = B.concat([ene[:1], ene, ene[-1:]])

        B.set_region("prim", lv_pad)
        u = B.div(mom_p, rho_p)
        u2 = B.mul(u, u)
        ru2 = B.mul(rho_p, u2)
        ke = B.mul(half, ru2)
        eint = B.sub(ene_p, ke)
        p = B.mul(gm1, eint)
        gp = B.mul(gam, p)
        gpr = B.div(gp, rho_p)
        c = B.sqrt(gpr)
        f2a = B.mul(mom_p, u)
        f2 = B.add(f2a, p)
        ep = B.add(ene_p, p)
        f3 = B.mul(u, ep)

        B.set_region("flux", lv_iface)
        u_l, u_r = u[:-1], u[1:]
        c_l, c_r = c[:-1], c[1:]
        sl = B.minimum(B.sub(u_l, c_l), B.sub(u_r, c_r))
        sr = B.maximum(B.add(u_l, c_l), B.add(u_r, c_r))
        slsr = B.mul(sl, sr)
        den = B.sub(sr, sl)
        take_left = B.greater_equal(sl, zero)
        take_right = B.less_equal(sr, zero)
        fluxes = []
        for f_comp, u_comp in ((mom_p, rho_p), (f2, mom_p), (f3, ene_p)):
            fl, fr = f_comp[:-1], f_comp[1:]
            t1 = B.sub(B.mul(sr, fl), B.mul(sl, fr))
            du = B.sub(u_comp[1:], u_comp[:-1])
            num = B.add(t1, B.mul(slsr, du))
            hll = B.div(num, den)
            fluxes.append(B.where(take_left, fl, B.where(take_right, fr, hll)))

        B.set_region("update", lv)
        new_state = []
        for state, f_comp in ((rho, fluxes[0]), (mom, fluxes[1]), (ene, fluxes[2])):
            df = B.sub(f_comp[1:], f_comp[:-1])
            new_state.append(B.sub(state, B.mul(dtdx, df)))
        rho, mom, ene = new_state

        if session is not None:
            for level in np.unique(lv):
                n_cells = int(np.count_nonzero(lv == level))
                session.record_bytes(48 * n_cells, RegionTag("update", int(level)))

        t += dt
        if params.adaptive_dt and t >= params.t_end - 1e-15:
            break

    return B.lower(rho), B.lower(mom), B.lower(ene)


def run_native(params: SodParams) -> np.ndarray:
    """Uninstrumented binary64 run of the same scheme; returns density."""
    rho, _, _ = _evolve(backends.NativeArrayOps(), params, None)
    return rho


def sod_run(cells, t_end, spec: TruncSpec, cutoff: int, session: Session,
            mode: str = "op", params: SodParams | None = None,
            baseline: np.ndarray | None = None):
    """Run the tube under a truncation spec and level cutoff.

    Returns (final density, exact reference density, SweepRecord).  The
    record's error is the L1 norm against the untruncated run (inf when
    the truncated run went non-finite); the exact solution is for scheme
    validation.
    """
    if params is None:
        params = SodParams(cells=cells, t_end=t_end)
    else:
        params = SodParams(cells=cells, t_end=t_end, cfl=params.cfl,
                           max_levels=params.max_levels,
                           signal_bound=params.signal_bound,
                           adaptive_dt=params.adaptive_dt,
                           threshold=params.threshold)
    if baseline is None:
        baseline = run_native(params)
    if not np.all(np.isfinite(baseline)):
        raise RuntimeError("full-precision run produced non-finite state")

    ctx = TruncContext(spec, mode=mode, threshold=params.threshold, regions=REGIONS)
    ctx.set_level_cutoff(params.max_levels, cutoff)
    start = time.perf_counter()
    with session.scope(ctx):
        B = backends.array_backend(mode, session)
        rho, _, _ = _evolve(B, params, session)
    wall = time.perf_counter() - start

    if np.all(np.isfinite(rho)):
        err = l1_error(rho, baseline)
    else:
        err = math.inf  # diverged under truncation: completed run, sentinel error
    fmt = spec.for_width(64)
    record = SweepRecord(
        workload="sod",
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
    reference = exact_density(params.grid(), params.t_end)
    return rho, reference, record
