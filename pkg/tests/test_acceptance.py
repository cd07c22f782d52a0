"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  The Sod sweep fixture is shared between the curve criterion and the
co-design classification criterion; everything else is self-contained.
"""

import math
import time

import numpy as np
import pytest

from raptorlite import codesign, oracle
from raptorlite import softfloat as sf
from raptorlite.memmode import dump_flags, mem_op, pre_convert
from raptorlite.scope import Session, TruncContext, parse_spec
from raptorlite.softfloat import FloatFormat
from raptorlite.workloads import eos, sod, stencil

IDENTITY = parse_spec("64_to_11_52")


def report(criterion: str, detail: str = ""):
    print("ACCEPTANCE %s: PASS %s" % (criterion, detail))


@pytest.fixture(scope="module")
def sod_sweep():
    """Mantissas {4,8,12,18,23,34,52} x cutoffs {0,1,2}, 400 cells, t=0.2."""
    params = sod.SodParams(cells=400, t_end=0.2)
    baseline = sod.run_native(params)
    started = time.perf_counter()
    records = {}
    for m in (4, 8, 12, 18, 23, 34, 52):
        spec = parse_spec("64_to_11_%d" % m)
        for l in (0, 1, 2):
            session = Session("acc-m%d-l%d" % (m, l))
            _, _, rec = sod.sod_run(400, 0.2, spec, l, session, mode="op",
                                    params=params, baseline=baseline)
            records[(m, l)] = rec
    elapsed = time.perf_counter() - started
    return records, elapsed


def test_criterion_1_softfloat_oracle_equivalence():
    started = time.perf_counter()
    total = mismatches = 0
    for exp_bits in (2, 3, 4):
        for man_bits in (1, 2, 3, 4):
            fmt = FloatFormat(exp_bits, man_bits)
            vals = list(oracle.enumerate_finite(fmt))
            engine = [
                sf.BigFloat.zero(t[1]) if t[0] == "zero" else sf.BigFloat.finite(*t)
                for (t, _, _, _) in vals
            ]
            for op in ("add", "sub", "mul", "div"):
                for i, (_, sa, na, da) in enumerate(vals):
                    a = engine[i]
                    for j, (_, sb, nb, db) in enumerate(vals):
                        want = oracle.rational_op(op, sa, na, da, sb, nb, db, fmt)
                        got = sf.arith(op, a, engine[j], fmt=fmt).rounded._triple()
                        total += 1
                        if got != want:
                            mismatches += 1
    elapsed = time.perf_counter() - started
    assert mismatches == 0
    assert elapsed < 60.0
    report("1 (oracle equivalence)",
           "%d exhaustive checks, 0 mismatches, %.1f s" % (total, elapsed))


def test_criterion_2_identity_transparency():
    # sod
    params = sod.SodParams(cells=100, t_end=0.1)
    base = sod.run_native(params)
    rho_op, _, rec_op = sod.sod_run(100, 0.1, IDENTITY, 0, Session(), mode="op",
                                    baseline=base)
    assert np.array_equal(rho_op.view(np.uint64), base.view(np.uint64))
    assert rec_op.l1_error == 0.0
    params_mem = sod.SodParams(cells=64, t_end=0.05)
    base_mem = sod.run_native(params_mem)
    rho_mem, _, rec_mem = sod.sod_run(64, 0.05, IDENTITY, 0, Session(), mode="mem",
                                      params=params_mem, baseline=base_mem)
    assert np.array_equal(rho_mem.view(np.uint64), base_mem.view(np.uint64))
    assert rec_mem.l1_error == 0.0
    # stencil
    sbase = stencil.run_native(96, 40)
    u_op, r1 = stencil.stencil_run(96, 40, IDENTITY, 0, Session(), mode="op",
                                   baseline=sbase)
    u_mem, r2 = stencil.stencil_run(96, 40, IDENTITY, 0, Session(), mode="mem",
                                    baseline=sbase)
    assert np.array_equal(u_op.view(np.uint64), sbase.view(np.uint64))
    assert np.array_equal(u_mem.view(np.uint64), sbase.view(np.uint64))
    assert r1.l1_error == 0.0 and r2.l1_error == 0.0
    # eos
    case = eos.EOSCase()
    nat = eos.eos_solve(case.target, case.table, None, Session(), mode="native")
    got_op = eos.eos_solve(case.target, case.table, IDENTITY, Session(), mode="op")
    got_mem = eos.eos_solve(case.target, case.table, IDENTITY, Session(), mode="mem")
    assert got_op == nat and got_mem == nat
    report("2 (identity transparency)", "op and mem bit-identical on all 3 workloads")


def test_criterion_3_fpu_table_reproduction():
    published = {"fp64": 1.00, "fp32": 2.65, "fp16": 7.30, "fp8": 18.41}
    for point in codesign.table5():
        rel = abs(point.recomputed_density / published[point.name] - 1.0)
        assert rel < 0.01, (point.name, rel)
    report("3 (FPU density table)", "all four rows within 1%")


def test_criterion_4_codesign_sanity(sod_sweep):
    records, _ = sod_sweep
    # untruncated workload: speedup exactly 1.0
    session = Session()
    _, rec = stencil.stencil_run(64, 10, parse_spec("64_to_5_10"), 4, session)
    assert rec.counters.truncated_flops == 0
    model = codesign.build_machine(FloatFormat(5, 10))
    est = codesign.estimate(rec.counters.full_flops, rec.counters.truncated_flops,
                            rec.counters.full_bytes, rec.counters.truncated_bytes,
                            model)
    assert est.speedup_compute == 1.0 and est.speedup_memory == 1.0
    # the bundled sweep is compute-bound under the default model
    verdicts = set()
    for (m, l), r in records.items():
        mdl = codesign.build_machine(FloatFormat(11, m))
        verdicts.add(codesign.classify(r.counters.total_flops,
                                       r.counters.total_bytes, mdl))
    assert verdicts == {"compute"}
    report("4 (co-design sanity)",
           "untruncated speedup == 1.0; all sweep rows compute-bound at 1024 GB/s")


def test_criterion_5_sod_qualitative_curve(sod_sweep):
    records, elapsed = sod_sweep
    assert elapsed < 600.0, "sweep took %.0f s" % elapsed
    # (a) identity mantissa reproduces the native run
    assert records[(52, 0)].l1_error <= 1e-12
    # (b) excluding the finest level never hurts
    for m in (4, 8, 12, 18, 23, 34, 52):
        assert records[(m, 1)].l1_error <= records[(m, 0)].l1_error, (
            "m=%d: %g vs %g" % (m, records[(m, 1)].l1_error, records[(m, 0)].l1_error))
    # (c) two orders of magnitude between 4 and 23 mantissa bits
    ratio = records[(4, 0)].l1_error / records[(23, 0)].l1_error
    assert ratio >= 1e2
    report("5 (Sod curve)", "err(52)=%.1e, ratio err(4)/err(23)=%.1e, %.0f s"
           % (records[(52, 0)].l1_error, ratio, elapsed))


def test_criterion_6_memmode_flagging():
    def run(threshold):
        session = Session()
        ctx = TruncContext(parse_spec("64_to_5_10"), mode="mem", threshold=threshold)
        with session.scope(ctx):
            acc = pre_convert(session, 0.0)
            one = pre_convert(session, 1.0)
            for _ in range(10_000):
                acc = mem_op(session, "add", acc, one, loc="fixture:acc")
        return dump_flags(session)

    flags = run(1e-3)
    assert len(flags) == 1 and flags[0][0] == "fixture:acc"
    assert run(math.inf) == []
    sweep = [run(t) for t in (0.0, 1e-6, 1e-3, 1e-1, math.inf)]
    sets = [{loc for loc, *_ in f} for f in sweep]
    for tighter, looser in zip(sets, sets[1:]):
        assert looser.issubset(tighter)
    report("6 (mem-mode flagging)",
           "one location at 1e-3, none at inf, monotone across 5 thresholds")


def test_criterion_7_eos_phenomenon():
    case = eos.EOSCase()
    _, _, ok52 = eos.eos_solve(case.target, case.table, IDENTITY, Session(), mode="op")
    _, _, ok4 = eos.eos_solve(case.target, case.table, parse_spec("64_to_11_4"),
                              Session(), mode="op")
    assert ok52 and not ok4
    results, m_star = eos.convergence_threshold(range(4, 53, 4))
    assert m_star is not None and 4 < m_star <= 52
    report("7 (EOS convergence)", "converges at 52, fails at 4, m* = %d" % m_star)


def test_criterion_8_counter_conservation():
    n, steps = 128, 25
    expected = stencil.analytic_flop_count(n, steps)
    for l in range(0, 5):
        session = Session()
        _, rec = stencil.stencil_run(n, steps, parse_spec("64_to_5_10"), l, session)
        total = rec.counters.truncated_flops + rec.counters.full_flops
        assert total == expected, (l, total, expected)
    report("8 (counter conservation)", "total == %d for every cutoff" % expected)


def test_criterion_9_parse_round_trip():
    text = "64_to_5_14;32_to_3_8"
    assert parse_spec(text).serialize() == text
    report("9 (grammar round-trip)", repr(text))
