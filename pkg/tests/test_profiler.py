"""Error norm, byte accounting, report export."""

import json
import math

import numpy as np
import pytest

from raptorlite import profiler
from raptorlite.profiler import (
    Counters,
    ReportSchemaError,
    SweepRecord,
    l1_error,
    read_csv,
    report_json,
    validate_report,
    write_csv,
    write_json,
)


class TestL1Error:
    def test_equal_fields(self):
        assert l1_error([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_scaled_field_gives_delta(self):
        ref = np.array([0.5, 1.5, 2.0, 4.0])
        delta = 1e-3
        assert l1_error(ref * (1 + delta), ref) == pytest.approx(delta, rel=1e-12)

    def test_hand_evaluated_example(self):
        # sum|diff| / sum|ref| = 1/7
        assert l1_error([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == pytest.approx(1.0 / 7.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            l1_error([1.0, 2.0], [1.0])

    def test_zero_reference_guard(self):
        with pytest.raises(ValueError, match="zero"):
            l1_error([1.0], [0.0])

    def test_zero_iff_bitwise_equal(self):
        a = np.array([0.1, 0.2])
        assert l1_error(a, a.copy()) == 0.0
        b = a.copy()
        b[0] = np.nextafter(b[0], 1.0)
        assert l1_error(b, a) > 0.0

    def test_triangle_inequality_shared_reference(self):
        rng = np.random.default_rng(0)
        ref = rng.uniform(0.5, 2.0, 32)
        a = ref + rng.normal(0, 0.1, 32)
        b = ref + rng.normal(0, 0.1, 32)
        lhs = np.sum(np.abs(a - b)) / np.sum(np.abs(ref))
        assert lhs <= l1_error(a, ref) + l1_error(b, ref) + 1e-15


def _rec(**kw):
    base = dict(workload="stencil", mode="op", spec="64_to_11_8", cutoff_l=0,
                mantissa_bits=8, exp_bits=11, l1_error=0.5,
                counters=Counters(10, 2, 100, 20), flags_total=0, wall_seconds=1.25)
    base.update(kw)
    return SweepRecord(**base)


class TestExport:
    def test_empty_report_is_header_only(self, tmp_path):
        path = tmp_path / "r.csv"
        write_csv([], path)
        rows = read_csv(path)
        assert rows == []

    def test_column_order(self, tmp_path):
        path = tmp_path / "r.csv"
        write_csv([_rec()], path)
        text = path.read_text()
        assert text.splitlines()[0].startswith("#")
        assert text.splitlines()[1] == ",".join(profiler.CSV_COLUMNS)

    def test_monotone_mantissa_rows(self, tmp_path):
        recs = [_rec(mantissa_bits=m, spec="64_to_11_%d" % m) for m in (4, 8, 12, 23, 52)]
        path = tmp_path / "r.csv"
        write_csv(recs, path)
        rows = read_csv(path)
        assert [int(r["mantissa_bits"]) for r in rows] == [4, 8, 12, 23, 52]

    def test_wall_seconds_zeroed_by_default(self, tmp_path):
        path = tmp_path / "r.csv"
        write_csv([_rec(wall_seconds=3.7)], path)
        assert read_csv(path)[0]["wall_seconds"] == "0.0"
        write_csv([_rec(wall_seconds=3.7)], path, include_wall=True)
        assert read_csv(path)[0]["wall_seconds"] == "3.7"

    def test_determinism_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        recs = [_rec(wall_seconds=0.1), _rec(wall_seconds=9.9, mantissa_bits=4)]
        write_csv(recs, p1)
        write_csv([_rec(wall_seconds=0.7), _rec(wall_seconds=0.2, mantissa_bits=4)], p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_inf_sentinel_spelled_inf(self, tmp_path):
        path = tmp_path / "r.csv"
        write_csv([_rec(l1_error=math.inf)], path)
        assert read_csv(path)[0]["l1_error"] == "inf"

    def test_json_round_trips_schema(self, tmp_path):
        path = tmp_path / "r.json"
        write_json([_rec()], path)
        obj = json.loads(path.read_text())
        validate_report(obj)
        assert obj["schema_version"] == profiler.SCHEMA_VERSION
        assert obj["records"][0]["truncated_flops"] == 10

    def test_validate_rejects_missing_columns(self):
        obj = report_json([_rec()])
        del obj["records"][0]["l1_error"]
        with pytest.raises(ReportSchemaError, match="l1_error"):
            validate_report(obj)
        with pytest.raises(ReportSchemaError):
            validate_report({"schema_version": 99, "records": []})


class TestCounters:
    def test_merge_and_totals(self):
        a = Counters(1, 2, 3, 4)
        a.merge(Counters(10, 20, 30, 40))
        assert (a.truncated_flops, a.full_flops) == (11, 22)
        assert a.total_bytes == 77

    def test_snapshot_is_independent(self):
        a = Counters(1, 0, 0, 0)
        snap = a.snapshot()
        a.truncated_flops += 5
        assert snap.truncated_flops == 1


class TestExportReport:
    def test_format_dispatch(self, tmp_path):
        profiler.export_report([_rec()], "csv", tmp_path / "a.csv")
        profiler.export_report([_rec()], "json", tmp_path / "a.json")
        assert read_csv(tmp_path / "a.csv")[0]["workload"] == "stencil"
        validate_report(json.loads((tmp_path / "a.json").read_text()))

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="csv"):
            profiler.export_report([], "xml", tmp_path / "a.xml")
