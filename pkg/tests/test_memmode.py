"""Mem-mode: boxed values, shadows, deviation flags, exclusions."""

import math

import numpy as np
import pytest

from raptorlite import memmode
from raptorlite.memmode import (
    CapacityError,
    InvalidHandleError,
    MemModeError,
    dump_flags,
    handle_from_float,
    mem_op,
    post_convert,
    pre_convert,
)
from raptorlite.scope import RegionTag, Session, TruncContext, parse_spec
from raptorlite.softfloat import to_f64


def mem_ctx(spec_text="64_to_5_10", **kw):
    return TruncContext(parse_spec(spec_text), mode="mem", **kw)


def accumulate_ones(session, n, loc="acc:1"):
    """Sum n copies of 1.0 through one instrumented location."""
    acc = pre_convert(session, 0.0)
    one = pre_convert(session, 1.0)
    for _ in range(n):
        acc = mem_op(session, "add", acc, one, loc=loc)
    return acc


class TestConversions:
    def test_round_trip_exact_value(self):
        s = Session()
        with s.scope(mem_ctx("64_to_11_52")):
            h = pre_convert(s, 1.0)
            assert post_convert(s, h) == 1.0

    def test_round_through_format(self):
        s = Session()
        with s.scope(mem_ctx("64_to_5_10")):
            h = pre_convert(s, 0.1)
            got = post_convert(s, h)
        # oracle: binary16 nearest of 0.1, widened
        assert got == 1638 * 2.0 ** -14

    def test_precision_increase_lossless(self):
        s = Session()
        with s.scope(mem_ctx("64_to_11_120")):
            for x in [0.1, math.pi, 1e-300, -3.7e250]:
                assert post_convert(s, pre_convert(s, x)) == x

    def test_requires_mem_scope(self):
        s = Session()
        with pytest.raises(MemModeError):
            pre_convert(s, 1.0)
        with s.scope(TruncContext(parse_spec("64_to_5_10"), mode="op")):
            with pytest.raises(MemModeError):
                pre_convert(s, 1.0)

    def test_capacity_bound(self):
        s = Session(mem_capacity=1000)
        with s.scope(mem_ctx()):
            handles = [pre_convert(s, float(i)) for i in range(1000)]
            with pytest.raises(CapacityError):
                pre_convert(s, 1.0)
            post_convert(s, handles.pop())  # released: room again
            pre_convert(s, 2.0)

    def test_many_transient_conversions(self):
        # release-on-unbox keeps the live count at zero no matter how many
        # values pass through; the default capacity (2**24) is never near
        s = Session(mem_capacity=1 << 24)
        with s.scope(mem_ctx()):
            for i in range(100_000):
                post_convert(s, pre_convert(s, float(i % 97), loc="conv:1"))
        assert len(s.records) == 0


class TestHandles:
    def test_round_trip_through_carrier(self):
        s = Session()
        with s.scope(mem_ctx()):
            h = pre_convert(s, 2.5)
            carrier = h.as_float()
            assert math.isnan(carrier)  # never numerically meaningful
            h2 = handle_from_float(carrier)
            assert h2 == h
            assert post_convert(s, h2) == 2.5

    def test_invalid_pattern_rejected(self):
        with pytest.raises(InvalidHandleError):
            handle_from_float(1.0)
        with pytest.raises(InvalidHandleError):
            handle_from_float(math.inf)

    def test_stale_handle_names_origin(self):
        s = Session()
        with s.scope(mem_ctx()):
            h = pre_convert(s, 1.0, loc="birth:7")
            post_convert(s, h)
            with pytest.raises(InvalidHandleError, match="birth:7"):
                post_convert(s, h)

    def test_unknown_ident_rejected(self):
        s = Session()
        with s.scope(mem_ctx()):
            with pytest.raises(InvalidHandleError):
                post_convert(s, memmode.Handle(memmode._QNAN_BASE | 12345))


class TestMemOp:
    def test_identity_format_payload_equals_shadow(self):
        s = Session()
        with s.scope(mem_ctx("64_to_11_52", threshold=0.0)):
            h = pre_convert(s, 0.1)
            g = pre_convert(s, 0.7)
            r = mem_op(s, "mul", h, g)
            assert to_f64(memmode.payload_value(s, r)) == memmode.shadow_value(s, r)
        assert dump_flags(s) == []

    def test_shadow_tracks_native_stream(self):
        s = Session()
        rng = np.random.default_rng(2)
        xs = rng.standard_normal(50)
        with s.scope(mem_ctx("64_to_5_6")):
            h = pre_convert(s, float(xs[0]))
            ref = float(xs[0])
            for x in xs[1:]:
                g = pre_convert(s, float(x))
                h = mem_op(s, "add", h, g)
                ref = ref + float(x)
            assert memmode.shadow_value(s, h) == ref

    def test_infinite_threshold_never_flags(self):
        s = Session()
        with s.scope(mem_ctx("64_to_5_2", threshold=math.inf)):
            accumulate_ones(s, 500)
        assert dump_flags(s) == []

    def test_binary16_accumulation_flags_one_location(self):
        s = Session()
        with s.scope(mem_ctx("64_to_5_10", threshold=1e-3)):
            h = accumulate_ones(s, 10_000, loc="acc:1")
            payload = to_f64(memmode.payload_value(s, h))
            shadow = memmode.shadow_value(s, h)
        flags = dump_flags(s)
        assert [loc for loc, *_ in flags] == ["acc:1"]
        assert shadow == 10_000.0
        assert payload < shadow  # the accumulator stalls far below the sum

    def test_flag_monotone_in_threshold(self):
        def flag_sets(theta):
            s = Session()
            with s.scope(mem_ctx("64_to_5_6", threshold=theta)):
                h = pre_convert(s, 0.1)
                k = pre_convert(s, 0.30000001)
                for i in range(40):
                    h = mem_op(s, "mul", h, k, loc="m:%d" % (i % 3))
            return {loc for loc, *_ in dump_flags(s)}

        thresholds = [0.0, 1e-8, 1e-4, 1e-2, math.inf]
        sets = [flag_sets(t) for t in thresholds]
        for tighter, looser in zip(sets, sets[1:]):
            assert looser.issubset(tighter)

    def test_two_sites_ordered_by_count(self):
        s = Session()
        with s.scope(mem_ctx("64_to_5_2", threshold=1e-6)):
            accumulate_ones(s, 300, loc="busy:1")
            accumulate_ones(s, 30, loc="quiet:1")
        flags = dump_flags(s)
        assert len(flags) == 2
        assert flags[0][0] == "busy:1" and flags[0][1] >= flags[1][1]


class TestExclusion:
    def test_exclude_everything_means_zero_flags(self):
        s = Session()
        ctx = mem_ctx("64_to_5_2", threshold=1e-9, regions=("acc",))
        ctx.exclude_region("acc")
        with s.scope(ctx):
            acc = pre_convert(s, 0.0, tag=RegionTag("acc"))
            one = pre_convert(s, 1.0, tag=RegionTag("acc"))
            for _ in range(200):
                acc = mem_op(s, "add", acc, one, tag=RegionTag("acc"))
            assert post_convert(s, acc) == 200.0
        assert dump_flags(s) == []
        assert ctx.counters.truncated_flops == 0
        assert ctx.counters.full_flops == 200

    def test_exclusion_removes_flagged_entry_on_rerun(self):
        def run(excluded):
            s = Session()
            ctx = mem_ctx("64_to_5_10", threshold=1e-3, regions=("acc", "other"))
            if excluded:
                ctx.exclude_region("acc")
            with s.scope(ctx):
                acc = pre_convert(s, 0.0, tag=RegionTag("acc"))
                one = pre_convert(s, 1.0, tag=RegionTag("acc"))
                for _ in range(5000):
                    acc = mem_op(s, "add", acc, one, tag=RegionTag("acc"), loc="acc:9")
            return {loc for loc, *_ in dump_flags(s)}, ctx.counters

        flagged, counters = run(excluded=False)
        assert flagged == {"acc:9"}
        assert counters.truncated_flops == 5000
        flagged_ex, counters_ex = run(excluded=True)
        assert flagged_ex == set()
        # the truncated fraction shrinks when the region is fenced off
        assert counters_ex.truncated_flops == 0
        assert counters_ex.full_flops == 5000

    def test_payload_saturation_vs_shadow(self):
        # at binary16 an integer accumulator stalls at 2048 (the increment
        # becomes a half-ulp tie toward even); the shadow keeps counting
        s = Session()
        with s.scope(mem_ctx("64_to_5_10", threshold=1e-3)):
            h = accumulate_ones(s, 10_000)
            assert to_f64(memmode.payload_value(s, h)) == 2048.0
            assert memmode.shadow_value(s, h) == 10_000.0


class TestPrecisionIncrease:
    def test_exact_52_bit_payload_is_bit_equal_to_shadow(self):
        s = Session()
        rng = np.random.default_rng(9)
        with s.scope(mem_ctx("64_to_11_52", threshold=0.0)):
            h = pre_convert(s, 1.0)
            for _ in range(300):
                g = pre_convert(s, float(rng.uniform(-2, 2)))
                kind = ["add", "mul", "sub"][int(rng.integers(0, 3))]
                h = mem_op(s, kind, h, g)
                assert to_f64(memmode.payload_value(s, h)) == memmode.shadow_value(s, h)
        assert dump_flags(s) == []

    def test_wider_payload_is_at_least_as_accurate_as_shadow(self):
        # above 52 bits the payload carries the shadow's own rounding error:
        # each widened payload sits within an ulp-scale band of the shadow
        # (zero flags at any practical threshold), and an exactly
        # representable chain stays exact
        s = Session()
        rng = np.random.default_rng(9)
        with s.scope(mem_ctx("64_to_11_120", threshold=1e-6)):
            h = pre_convert(s, 1.0)
            for i in range(300):
                g = pre_convert(s, float(rng.uniform(0.5, 2.0)))
                kind = ["add", "mul", "sub"][int(rng.integers(0, 3))]
                h = mem_op(s, kind, h, g)
                wide = to_f64(memmode.payload_value(s, h))
                shadow = memmode.shadow_value(s, h)
                assert abs(wide - shadow) <= 400 * 2.0 ** -52 * max(abs(shadow), 1.0)
        assert dump_flags(s) == []
