"""System power sampling and program-relative energy.

A program's energy is isolated from whole-system readings by subtraction:
the median of a baseline trace is the idle system power, the time-weighted
mean during the workload is the absolute program power, and their
difference times the running time is the relative energy.

Power comes from a *source*: :class:`CounterSource` reads cumulative
``energy_uj`` counters from a powercap-style directory, :class:`ReplaySource`
plays back a scripted CSV trace in virtual time.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "ENERGY_UJ",
    "POWER_W",
    "DEFAULT_INTERVAL_S",
    "InsufficientDataError",
    "SourceUnavailableError",
    "PartialTraceError",
    "PowerSample",
    "PowerTrace",
    "RelativeEnergyReport",
    "interval_powers",
    "base_power",
    "mean_power",
    "trace_energy_j",
    "relative_energy",
    "run_measured",
    "counter_delta",
    "CounterSource",
    "ReplaySource",
    "read_counter_source",
    "read_replay_csv",
    "write_replay_csv",
]

ENERGY_UJ = "energy_uj"
POWER_W = "power_w"
DEFAULT_INTERVAL_S = 0.1


class InsufficientDataError(ValueError):
    pass


class SourceUnavailableError(RuntimeError):
    pass


class PartialTraceError(RuntimeError):
    """Sampling failed mid-run; ``samples`` holds what was collected."""

    def __init__(self, message: str, samples: Sequence["PowerSample"]):
        super().__init__(message)
        self.samples = list(samples)


@dataclass(frozen=True)
class PowerSample:
    timestamp_s: float
    value: float
    kind: str = POWER_W

    def __post_init__(self):
        if self.kind not in (ENERGY_UJ, POWER_W):
            raise ValueError(f"unknown sample kind {self.kind!r}")


@dataclass
class PowerTrace:
    source_name: str
    samples: list[PowerSample] = field(default_factory=list)
    sampling_interval_s: float = DEFAULT_INTERVAL_S

    @property
    def kind(self) -> str:
        kinds = {s.kind for s in self.samples}
        if len(kinds) > 1:
            raise ValueError(f"trace {self.source_name!r} mixes sample kinds {sorted(kinds)}")
        return kinds.pop() if kinds else POWER_W

    @property
    def duration_s(self) -> float:
        if len(self.samples) < 2:
            return 0.0
        return self.samples[-1].timestamp_s - self.samples[0].timestamp_s

    def validate(self) -> None:
        if len(self.samples) < 2:
            raise InsufficientDataError(
                f"trace {self.source_name!r} has {len(self.samples)} sample(s); need >= 2")
        ts = np.array([s.timestamp_s for s in self.samples])
        if np.any(np.diff(ts) <= 0):
            raise ValueError(f"trace {self.source_name!r}: timestamps not strictly increasing")
        if self.kind == ENERGY_UJ:
            values = np.array([s.value for s in self.samples])
            if np.any(np.diff(values) < 0):
                raise ValueError(f"trace {self.source_name!r}: energy counter decreases")

    @classmethod
    def from_powers(cls, powers: Iterable[float], interval_s: float = 1.0, t0: float = 0.0,
                    source_name: str = "synthetic") -> "PowerTrace":
        samples = [PowerSample(t0 + i * interval_s, float(p), POWER_W) for i, p in enumerate(powers)]
        return cls(source_name, samples, interval_s)


@dataclass(frozen=True)
class RelativeEnergyReport:
    base_power_w: float
    absolute_power_w: float
    relative_power_w: float
    running_time_s: float
    relative_energy_j: float
    drift_warning: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def interval_powers(trace: PowerTrace) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation powers (W) and their durations (s).

    Counter traces give one ``dE/dt`` per interval.  Power traces give the
    sampled values themselves, each weighted by the trapezoid share of time
    around it.
    """
    trace.validate()
    ts = np.array([s.timestamp_s for s in trace.samples], dtype=float)
    values = np.array([s.value for s in trace.samples], dtype=float)
    dt = np.diff(ts)
    if trace.kind == ENERGY_UJ:
        return np.diff(values) * 1e-6 / dt, dt
    weights = np.zeros_like(ts)
    weights[:-1] += dt / 2
    weights[1:] += dt / 2
    return values, weights


def base_power(trace: PowerTrace) -> float:
    """Median power of an idle-system trace."""
    powers, _ = interval_powers(trace)
    return float(statistics.median(powers.tolist()))


def trace_energy_j(trace: PowerTrace) -> float:
    trace.validate()
    if trace.kind == ENERGY_UJ:
        return (trace.samples[-1].value - trace.samples[0].value) * 1e-6
    ts = np.array([s.timestamp_s for s in trace.samples])
    ps = np.array([s.value for s in trace.samples])
    return float(np.sum(np.diff(ts) * (ps[1:] + ps[:-1]) / 2))


def mean_power(trace: PowerTrace) -> float:
    """Time-weighted mean power over the trace."""
    return trace_energy_j(trace) / trace.duration_s


def relative_energy(baseline: PowerTrace, workload: PowerTrace,
                    running_time_s: float) -> RelativeEnergyReport:
    if not running_time_s > 0:
        raise ValueError("running_time_s must be > 0")
    base = base_power(baseline)
    absolute = mean_power(workload)
    relative = absolute - base
    drift = relative < 0
    if drift:
        log.warning("workload power %.3f W below baseline %.3f W: baseline drift?", absolute, base)
    return RelativeEnergyReport(base, absolute, relative, running_time_s,
                                relative * running_time_s, drift)


# -- sources -----------------------------------------------------------------

def counter_delta(previous: int, current: int, max_range: int) -> int:
    """Counter increase with one wraparound at ``max_range`` allowed."""
    if current >= previous:
        return current - previous
    return current + max_range - previous


class CounterSource:
    """Cumulative energy counters under a powercap-style directory.

    ``root`` either holds ``energy_uj``/``max_energy_range_uj`` itself or has
    one subdirectory per power domain holding them; domains are summed.
    Readings are wraparound-corrected and therefore monotone.
    """

    virtual = False

    def __init__(self, root):
        self.root = Path(root)
        self.name = f"counters:{self.root}"
        self.domains = self._discover()
        self._last_raw: Optional[list[int]] = None
        self._total_uj = 0

    def _discover(self) -> list[Path]:
        if not self.root.is_dir():
            raise SourceUnavailableError(f"{self.root} is not a directory")
        if (self.root / "energy_uj").is_file():
            domains = [self.root]
        else:
            domains = sorted(p for p in self.root.iterdir()
                             if (p / "energy_uj").is_file())
        if not domains:
            raise SourceUnavailableError(f"no energy_uj counters under {self.root}")
        self.max_ranges = []
        for d in domains:
            try:
                self.max_ranges.append(int((d / "max_energy_range_uj").read_text().strip()))
            except (OSError, ValueError) as exc:
                raise SourceUnavailableError(f"{d}: unreadable max_energy_range_uj ({exc})") from exc
        return domains

    def _read_raw(self) -> list[int]:
        try:
            return [int((d / "energy_uj").read_text().strip()) for d in self.domains]
        except (OSError, ValueError) as exc:
            raise SourceUnavailableError(f"counter read failed: {exc}") from exc

    def read(self) -> PowerSample:
        raw = self._read_raw()
        now = time.monotonic()
        if self._last_raw is not None:
            self._total_uj += sum(counter_delta(p, c, m)
                                  for p, c, m in zip(self._last_raw, raw, self.max_ranges))
        self._last_raw = raw
        return PowerSample(now, float(self._total_uj), ENERGY_UJ)

    def clock(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


def read_counter_source(root) -> PowerSample:
    """One wraparound-corrected cumulative reading (0 for a fresh source)."""
    return CounterSource(root).read()


class ReplaySource:
    """Scripted samples played back in virtual time.

    ``clock`` reports the timestamp of the last sample served and ``sleep``
    does nothing, so a run over a replay is exactly reproducible.
    """

    virtual = True

    def __init__(self, samples: Sequence[PowerSample], name: str = "replay",
                 fail_after: Optional[int] = None):
        if not samples:
            raise SourceUnavailableError("replay trace is empty")
        self.samples = list(samples)
        self.name = name
        self.fail_after = fail_after
        self._cursor = 0

    @classmethod
    def from_csv(cls, path) -> "ReplaySource":
        path = Path(path)
        if not path.is_file():
            raise SourceUnavailableError(f"replay file {path} not found")
        return cls(read_replay_csv(path), name=f"replay:{path}")

    @property
    def exhausted(self) -> bool:
        return self._cursor >= len(self.samples)

    def peek_time(self) -> float:
        return self.samples[min(self._cursor, len(self.samples) - 1)].timestamp_s

    def read(self) -> PowerSample:
        if self.fail_after is not None and self._cursor >= self.fail_after:
            raise SourceUnavailableError(f"replay failure injected at sample {self._cursor}")
        if self.exhausted:
            raise SourceUnavailableError("replay trace exhausted")
        sample = self.samples[self._cursor]
        self._cursor += 1
        return sample

    def clock(self) -> float:
        return self.samples[max(self._cursor - 1, 0)].timestamp_s

    def sleep(self, seconds: float) -> None:
        pass


def read_replay_csv(path_or_text) -> list[PowerSample]:
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    else:
        text = path_or_text
    rows = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    reader = csv.DictReader(rows)
    if reader.fieldnames != ["timestamp_s", "value", "kind"]:
        raise ValueError(f"replay header must be timestamp_s,value,kind; got {reader.fieldnames}")
    return [PowerSample(float(r["timestamp_s"]), float(r["value"]), r["kind"]) for r in reader]


def write_replay_csv(samples: Iterable[PowerSample], path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp_s", "value", "kind"])
    for s in samples:
        writer.writerow([repr(s.timestamp_s), repr(s.value), s.kind])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- measurement -------------------------------------------------------------

class _Sampler(threading.Thread):
    """Background reader appending to one trace; the only writer of it."""

    def __init__(self, source, interval_s: float):
        super().__init__(daemon=True)
        self.source = source
        self.interval_s = interval_s
        self.samples: list[PowerSample] = []
        self.error: Optional[BaseException] = None
        self._halt = threading.Event()

    def run(self):
        try:
            while not self._halt.wait(self.interval_s):
                self.samples.append(self.source.read())
        except BaseException as exc:  # surfaced by the caller after join
            self.error = exc

    def finish(self) -> None:
        self._halt.set()
        self.join()


def _sample_baseline(source, duration_s: float, interval_s: float) -> list[PowerSample]:
    samples = [source.read()]
    t0 = samples[0].timestamp_s
    while True:
        if source.virtual:
            if source.exhausted or source.peek_time() - t0 > duration_s:
                break
        elif source.clock() - t0 >= duration_s and len(samples) >= 2:
            break
        source.sleep(interval_s)
        samples.append(source.read())
    return samples


def run_measured(workload: Callable[[], object], source, baseline_duration_s: float,
                 interval_s: float = DEFAULT_INTERVAL_S) -> RelativeEnergyReport:
    """Sample a baseline, run ``workload`` while sampling, return its relative energy.

    With a replay source the samples after the baseline window form the
    workload trace and the running time is that trace's span.
    """
    collected: list[PowerSample] = []
    try:
        baseline = _sample_baseline(source, baseline_duration_s, interval_s)
    except SourceUnavailableError as exc:
        raise PartialTraceError(f"baseline sampling failed: {exc}", collected) from exc
    collected.extend(baseline)
    base_trace = PowerTrace(source.name, baseline, interval_s)

    if source.virtual:
        workload()
        # a cumulative counter integrates from the last baseline reading;
        # an instantaneous power sample belongs to the baseline only
        work = [baseline[-1]] if baseline[-1].kind == ENERGY_UJ else []
        shared = len(work)
        try:
            while not source.exhausted:
                work.append(source.read())
        except SourceUnavailableError as exc:
            raise PartialTraceError(f"workload sampling failed: {exc}",
                                    collected + work[shared:]) from exc
        running = work[-1].timestamp_s - work[0].timestamp_s if len(work) >= 2 else 0.0
    else:
        start = source.read()
        sampler = _Sampler(source, interval_s)
        t_start = start.timestamp_s
        sampler.start()
        try:
            workload()
        finally:
            t_end = source.clock()
            sampler.finish()
        work = [start] + sampler.samples
        if sampler.error is not None:
            raise PartialTraceError(f"workload sampling failed: {sampler.error}",
                                    collected + work) from sampler.error
        try:
            work.append(source.read())
        except SourceUnavailableError as exc:
            raise PartialTraceError(f"final sample failed: {exc}", collected + work) from exc
        running = t_end - t_start

    if running <= 0 or len(work) < 2:
        base = base_power(base_trace)
        return RelativeEnergyReport(base, base, 0.0, 0.0, 0.0, False)
    return relative_energy(base_trace, PowerTrace(source.name, work, interval_s), running)
