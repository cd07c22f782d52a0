"""Numerical profiling of scientific kernels under configurable precision.

Execute instrumented kernels with per-operation truncation (op-mode) or
persistent extended-precision values with full-precision shadows
(mem-mode), collect error statistics and operation/byte counters, and feed
them into a two-FPU co-design model for speedup estimates.
"""

from . import codesign, memmode, opmode, profiler, vecops, workloads
from .memmode import Handle, dump_flags, handle_from_float, mem_op, post_convert, pre_convert
from .opmode import array_exec, drain_stats, math_exec, op_exec
from .profiler import Counters, SweepRecord, counters_snapshot, l1_error
from .scope import (
    RegionTag,
    Session,
    TruncContext,
    TruncSpec,
    exclude_region,
    parse_spec,
    set_level_cutoff,
)
from .softfloat import (
    BINARY16,
    BINARY32,
    BINARY64,
    BigFloat,
    FloatFormat,
    RoundingReport,
    arith,
    elementary,
    from_f64,
    round_to_format,
    to_f64,
)

__version__ = "0.1.0"
