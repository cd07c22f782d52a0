"""Truncation configuration and dynamic scoping.

A truncation spec maps a source width (32 or 64) to a target format using
the grammar ``64_to_5_14;32_to_3_8``.  A TruncContext carries one spec plus
a mode, an enable predicate over region tags, and its own counters; a
Session owns a stack of contexts.  Scoping is dynamic: every instrumented
operation executed while a context is on the stack is governed by the
innermost context whose predicate enables the operation's region, or runs
at native binary64 (and is counted as full precision) when none does.

The level cutoff used by the mesh-style workloads replaces the predicate:
with maximum refinement level M and cutoff l, regions at levels up to
M - l are truncated and the l most refined levels run at full precision,
so l = 0 truncates everything and l = M truncates nothing.  Untagged
operations count as the coarsest level.
"""

from __future__ import annotations

import re
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .profiler import Counters
from .softfloat import FloatFormat, FormatRangeError

ENV_SPEC_OVERRIDE = "RAPTOR_LITE_TRUNCATE"

_ENTRY_RE = re.compile(r"^(?P<src>\d+)_to_(?P<exp>\d+)_(?P<man>\d+)$")
_SOURCE_WIDTHS = (32, 64)


class SpecError(ValueError):
    """Base class for truncation-spec string problems."""


class SpecParseError(SpecError):
    def __init__(self, message: str, offset: int):
        super().__init__("%s (at byte %d)" % (message, offset))
        self.offset = offset


class SpecConflictError(SpecError):
    pass


class SpecRangeError(SpecError):
    pass


class ScopeOrderError(RuntimeError):
    """Scope guards released out of LIFO order."""


class ConcurrencyError(RuntimeError):
    """A session was touched from a thread other than its owner."""


class ConfigurationError(ValueError):
    """Bad region/exclusion configuration."""


class TruncSpec:
    """Ordered width -> FloatFormat mapping; widths without an entry pass through."""

    def __init__(self, entries):
        seen = {}
        ordered = []
        for width, fmt in entries:
            if width in seen:
                raise SpecConflictError("duplicate source width %d" % width)
            seen[width] = fmt
            ordered.append((width, fmt))
        self._entries = tuple(ordered)
        self._by_width = seen

    @property
    def entries(self):
        return self._entries

    def for_width(self, width: int) -> Optional[FloatFormat]:
        return self._by_width.get(width)

    def serialize(self) -> str:
        return ";".join(
            "%d_to_%d_%d" % (w, f.exp_bits, f.man_bits) for w, f in self._entries
        )

    def __eq__(self, other):
        return isinstance(other, TruncSpec) and self._entries == other._entries

    def __hash__(self):
        return hash(self._entries)

    def __repr__(self):
        return "TruncSpec(%r)" % self.serialize()


def parse_spec(text: str) -> TruncSpec:
    """Parse ``<src>_to_<exp>_<man>`` entries separated by semicolons.

    Malformed entries report the byte offset of the entry; duplicate source
    widths and out-of-range widths raise their own error types.
    """
    entries = []
    offset = 0
    if text.strip() == "":
        raise SpecParseError("empty truncation spec", 0)
    for chunk in text.split(";"):
        m = _ENTRY_RE.match(chunk)
        if not m:
            raise SpecParseError("malformed entry %r" % chunk, offset)
        src = int(m.group("src"))
        if src not in _SOURCE_WIDTHS:
            raise SpecRangeError(
                "source width must be one of %s, got %d" % (_SOURCE_WIDTHS, src)
            )
        try:
            fmt = FloatFormat(int(m.group("exp")), int(m.group("man")))
        except FormatRangeError as exc:
            raise SpecRangeError(str(exc)) from exc
        width_fmt = (src, fmt)
        if any(w == src for w, _ in entries):
            raise SpecConflictError("duplicate source width %d" % src)
        entries.append(width_fmt)
        offset += len(chunk) + 1
    return TruncSpec(entries)


@dataclass(frozen=True)
class RegionTag:
    """Workload-supplied region identity, optionally with a refinement level."""

    name: str
    level: Optional[int] = None


class TruncContext:
    """Active truncation scope: spec, mode, predicate, counters, scratch."""

    def __init__(
        self,
        spec: TruncSpec,
        mode: str = "op",
        enable: Optional[Callable[[Optional[RegionTag]], bool]] = None,
        threshold: float = 1e-6,
        subnormals: bool = True,
        regions=(),
    ):
        if mode not in ("op", "mem"):
            raise ConfigurationError("mode must be 'op' or 'mem', got %r" % mode)
        self.spec = spec
        self.mode = mode
        self.enable = enable
        self.threshold = float(threshold)
        self.subnormals = subnormals
        self.known_regions = set(regions)
        self.excluded = set()
        self.counters = Counters()
        self.stats = {}
        self._scratch = {}

    def enabled_for(self, tag: Optional[RegionTag]) -> bool:
        if self.enable is None:
            return True
        return bool(self.enable(tag))

    def set_level_cutoff(self, max_level: int, l: int) -> None:
        """Truncate levels 1..max_level-l; the l finest levels run full."""
        if l < 0:
            raise ConfigurationError("cutoff l must be non-negative")
        limit = max_level - l

        def predicate(tag: Optional[RegionTag]) -> bool:
            level = 1 if tag is None or tag.level is None else tag.level
            return level <= limit

        self.enable = predicate

    def exclude_region(self, name: str) -> None:
        """Run the named region's payload arithmetic at full precision."""
        if self.known_regions and name not in self.known_regions:
            raise ConfigurationError(
                "unknown region %r (known: %s)" % (name, sorted(self.known_regions))
            )
        self.excluded.add(name)

    def scratch(self, key, shape, dtype):
        """Reusable buffer pool so steady-state array ops stop allocating."""
        buf = self._scratch.get(key)
        if buf is None or buf.shape != shape or buf.dtype != dtype:
            buf = np.empty(shape, dtype=dtype)
            self._scratch[key] = buf
        return buf


def set_level_cutoff(ctx: TruncContext, max_level: int, l: int) -> None:
    ctx.set_level_cutoff(max_level, l)


def exclude_region(ctx: TruncContext, tag) -> None:
    name = tag.name if isinstance(tag, RegionTag) else str(tag)
    ctx.exclude_region(name)


class ScopeGuard:
    """Handle for one pushed context; must be released in LIFO order."""

    def __init__(self, session: "Session", ctx: TruncContext):
        self._session = session
        self._ctx = ctx
        self._released = False

    @property
    def context(self) -> TruncContext:
        return self._ctx

    def release(self) -> None:
        if self._released:
            raise ScopeOrderError("scope guard released twice")
        stack = self._session._stack
        if not stack or stack[-1] is not self:
            raise ScopeOrderError("scope guards must be released innermost-first")
        self._session._check_thread()
        stack.pop()
        self._released = True


class Session:
    """One profiling session: a context stack plus all collected state.

    A session is confined to a single thread (checked on scope changes);
    independent sessions on different threads are fine.
    """

    def __init__(self, name: str = "session", mem_capacity: int = 1 << 24):
        self.name = name
        self._stack: list[ScopeGuard] = []
        self.context_registry: list[TruncContext] = []
        self.root_counters = Counters()
        self._thread: Optional[int] = None
        # mem-mode state
        self.mem_capacity = int(mem_capacity)
        self.records = {}
        self.free_ids: list[int] = []
        self.next_id = 0
        self.flag_table = {}
        self.op_index = 0
        self._tombstones = {}

    # -- scoping -------------------------------------------------------

    def _check_thread(self) -> None:
        ident = threading.get_ident()
        if self._thread is None:
            self._thread = ident
        elif self._thread != ident:
            raise ConcurrencyError(
                "session %r is bound to thread %d, used from %d"
                % (self.name, self._thread, ident)
            )

    def push(self, ctx: TruncContext) -> ScopeGuard:
        self._check_thread()
        guard = ScopeGuard(self, ctx)
        self._stack.append(guard)
        if ctx not in self.context_registry:
            self.context_registry.append(ctx)
        return guard

    @contextmanager
    def scope(self, ctx: TruncContext):
        guard = self.push(ctx)
        try:
            yield ctx
        finally:
            guard.release()

    def resolve(self, tag: Optional[RegionTag]) -> Optional[TruncContext]:
        """Innermost context enabled for the tag, or None for native."""
        for guard in reversed(self._stack):
            if guard.context.enabled_for(tag):
                return guard.context
        return None

    @property
    def depth(self) -> int:
        return len(self._stack)

    # -- byte accounting -------------------------------------------------

    def record_bytes(self, n: int, tag: Optional[RegionTag] = None) -> None:
        """Attribute n bytes of traffic to the truncated or full bucket."""
        ctx = self.resolve(tag)
        if ctx is not None:
            ctx.counters.truncated_bytes += int(n)
        else:
            self.root_counters.full_bytes += int(n)
