"""Continuous-time event simulation of a fully meshed DESYNC or PCO network.

Time is measured in periods (``T = 1``); the measurement noise is the
period-normalised ``params.sigma_delta``.  A trial pops the earliest
scheduled firing, lets every other node hear it (unless it misfired) and
reschedules nodes whose phase changed.  Heap entries are invalidated
lazily: an entry is stale when its time no longer equals the node's
scheduled firing time.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .core import ProtocolParams, wrap
from .protocols import advance_streak, desync_phase, gap_converged, in_listening_interval, pco_phase

PROTOCOLS = ("desync", "pco")
THREADS_ENV = "DESYNCLAB_THREADS"
_BUFFER = 4096


@dataclass(frozen=True)
class SimConfig:
    """One simulated experiment cell.

    ``misfire_prob`` overrides ``params.misfire_prob`` when given.
    ``initial_offsets`` fixes each node's first firing time (in periods,
    within [0, 1)); by default they are drawn uniformly.
    """

    params: ProtocolParams
    protocol: str = "desync"
    detection_window: int = 10
    misfire_prob: Optional[float] = None
    max_cycles: int = 5000
    seed: int = 0
    initial_offsets: Optional[tuple] = None

    def __post_init__(self):
        proto = str(self.protocol).lower()
        if proto not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        object.__setattr__(self, "protocol", proto)
        if self.detection_window < 1:
            raise ValueError("detection_window must be >= 1")
        if self.max_cycles <= self.detection_window:
            raise ValueError("max_cycles must exceed detection_window")
        if self.misfire_prob is not None and not 0.0 <= self.misfire_prob < 1.0:
            raise ValueError(f"misfire_prob must be in [0, 1), got {self.misfire_prob!r}")
        if self.initial_offsets is not None:
            offs = tuple(float(x) for x in self.initial_offsets)
            if len(offs) != self.params.W or not all(0.0 <= x < 1.0 for x in offs):
                raise ValueError("initial_offsets needs W values in [0, 1)")
            object.__setattr__(self, "initial_offsets", offs)

    @property
    def effective_misfire(self) -> float:
        return self.params.misfire_prob if self.misfire_prob is None else self.misfire_prob


@dataclass(frozen=True)
class TrialRecord:
    # per node: firing cycle of the detection_window-th consecutive success,
    # minus (detection_window - 1); None when the trial hit max_cycles
    per_node_cycles: Optional[tuple]
    network_cycles: Optional[int]
    converged: bool
    seed: int
    # phase updates each node performed during the first period
    first_cycle_updates: tuple = ()
    # traced node's phase: initial value, then the value after each update
    trace: tuple = ()
    # each node's next scheduled firing time (in periods) when the trial ended
    final_fire_times: tuple = ()


@dataclass(frozen=True)
class GridSummary:
    protocol: str
    W: int
    alpha: float
    b_thres: float
    n_trials: int
    mean_cycles: float
    std_cycles: float
    non_converged: int
    trials: tuple = field(default=(), repr=False)

    @property
    def key(self):
        return (self.protocol, self.W, self.alpha, self.b_thres)


class _Uniforms:
    """Buffered draws from one generator; keeps the inner loop in plain Python."""

    def __init__(self, rng: np.random.Generator, low: float, high: float):
        self._rng, self._low, self._high = rng, low, high
        self._buf: List[float] = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.uniform(self._low, self._high, _BUFFER).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x


def _simulate(config: SimConfig, trace_node: Optional[int] = None, trace_len: int = 0,
              stop_time: Optional[float] = None) -> TrialRecord:
    p = config.params
    W, alpha, b = p.W, p.alpha, p.b_thres
    window = config.detection_window
    is_desync = config.protocol == "desync"

    init_ss, noise_ss, misfire_ss = np.random.SeedSequence(config.seed).spawn(3)
    if config.initial_offsets is None:
        offsets = np.random.default_rng(init_ss).random(W).tolist()
    else:
        offsets = list(config.initial_offsets)

    half = math.sqrt(3.0) * p.sigma_delta
    noise = _Uniforms(np.random.default_rng(noise_ss), -half, half) if half > 0 else (lambda: 0.0)
    mis_p = config.effective_misfire
    coin = _Uniforms(np.random.default_rng(misfire_ss), 0.0, 1.0) if mis_p > 0 else None

    next_fire = list(offsets)
    last_own = [x - 1.0 for x in offsets]  # virtual firing one period before the first
    # the network is taken to have been firing at these phases before t=0,
    # so each node starts having heard the latest virtual firing of the others
    last_heard = [max(offsets[k] for k in range(W) if k != i) - 1.0 for i in range(W)]
    prev_before_own = [None] * W
    pending = [False] * W
    streak = [0] * W
    cycles = [0] * W
    declared: List[Optional[int]] = [None] * W
    n_declared = 0
    first_updates = [0] * W

    tracing = trace_node is not None
    trace = [wrap(1.0 - offsets[trace_node])] if tracing else []

    def record(i, phase):
        if t < 1.0:
            first_updates[i] += 1
        if tracing and i == trace_node:
            trace.append(phase)

    heap = [(next_fire[i], i) for i in range(W)]
    heapq.heapify(heap)
    converged = False
    t = 0.0
    while heap:
        t, j = heapq.heappop(heap)
        if t != next_fire[j]:
            continue
        if stop_time is not None and t >= stop_time:
            break
        cycles[j] += 1
        if cycles[j] > config.max_cycles:
            break

        heard = last_heard[j]
        ok = heard is not None and gap_converged(t - heard, W, b)
        streak[j] = advance_streak(streak[j], ok)
        if declared[j] is None and streak[j] >= window:
            declared[j] = cycles[j] - (window - 1)
            n_declared += 1
            if n_declared == W and not tracing:
                converged = True
                break

        prev_before_own[j] = heard
        pending[j] = heard is not None
        last_own[j] = t
        next_fire[j] = t + 1.0
        heapq.heappush(heap, (t + 1.0, j))

        if coin is not None and coin() < mis_p:
            continue
        for i in range(W):
            if i == j:
                continue
            if is_desync:
                if pending[i]:
                    own = t - last_own[i]
                    prev = t - prev_before_own[i]
                    new = desync_phase(own, prev, 0.0, alpha, noise(), noise(), noise())
                    next_fire[i] = t + (1.0 - new)
                    heapq.heappush(heap, (next_fire[i], i))
                    pending[i] = False
                    record(i, new)
            else:
                own = t - last_own[i]
                if in_listening_interval(own, W):
                    new = pco_phase(own, alpha, W, noise())
                    next_fire[i] = t + (1.0 - new)
                    heapq.heappush(heap, (next_fire[i], i))
                    record(i, new)
            last_heard[i] = t

        if tracing and len(trace) > trace_len:
            break

    if converged:
        per_node = tuple(declared)
        return TrialRecord(per_node, max(per_node), True, config.seed, tuple(first_updates), tuple(trace),
                           tuple(next_fire))
    return TrialRecord(None, None, False, config.seed, tuple(first_updates), tuple(trace), tuple(next_fire))


def run_trial(config: SimConfig) -> TrialRecord:
    """Run one trial to network-wide convergence or ``max_cycles``."""
    return _simulate(config)


def trace_phases(config: SimConfig, node: int = 0, n_updates: int = 10) -> tuple:
    """Phase of ``node`` initially and after each of its first ``n_updates`` updates.

    The returned tuple can be shorter if the trial ends first.
    """
    if not 0 <= node < config.params.W:
        raise ValueError("node index out of range")
    if n_updates < 1:
        raise ValueError("n_updates must be >= 1")
    rec = _simulate(config, trace_node=node, trace_len=n_updates)
    return rec.trace[: n_updates + 1]


def first_cycle_update_counts(config: SimConfig) -> tuple:
    """Number of phase updates each node performs during the first period."""
    return _simulate(config, stop_time=1.0).first_cycle_updates


# --------------------------------------------------------------------------
# batches

def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _run_cell(args) -> tuple:
    template, trials, base_seed = args
    return tuple(run_trial(replace(template, seed=base_seed + i)) for i in range(trials))


def summarize(template: SimConfig, records: Sequence[TrialRecord]) -> GridSummary:
    """Pool per-node convergence counts over the converged trials."""
    pooled = [c for r in records if r.converged for c in r.per_node_cycles]
    if pooled:
        arr = np.asarray(pooled, dtype=float)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    else:
        mean = std = math.nan
    p = template.params
    return GridSummary(
        protocol=template.protocol,
        W=p.W,
        alpha=p.alpha,
        b_thres=p.b_thres,
        n_trials=len(records),
        mean_cycles=mean,
        std_cycles=std,
        non_converged=sum(not r.converged for r in records),
        trials=tuple(records),
    )


def run_grid(cells: Sequence[SimConfig], trials_per_cell: int, base_seed: int = 0,
             workers: Optional[int] = None) -> List[GridSummary]:
    """Run ``trials_per_cell`` trials per cell with seeds ``base_seed + i``.

    Cells run on up to ``workers`` processes (default: ``DESYNCLAB_THREADS``,
    0 meaning all CPUs).  Output order follows ``cells`` whatever the
    completion order, and each trial depends only on its own seed.
    """
    if trials_per_cell < 2:
        raise ValueError("trials_per_cell must be >= 2")
    if workers is None:
        workers = worker_count()
    jobs = [(c, trials_per_cell, base_seed) for c in cells]
    if workers <= 1 or len(jobs) <= 1:
        results = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_cell, jobs))
    return [summarize(c, r) for c, r in zip(cells, results)]


# --------------------------------------------------------------------------
# normality diagnostic

@dataclass(frozen=True)
class NormalityReport:
    update_index: int
    n_samples: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    ks_normal: float
    ks_uniform: float


def phase_samples(config: SimConfig, update_index: int, n_samples: int, node: int = 0) -> np.ndarray:
    """Phase of ``node`` after its ``update_index``-th update over independent seeds.

    Index 0 is the initial phase.  Trials use seeds ``config.seed + s``.
    Trials that end before the update happens are skipped.
    """
    out = []
    for s in range(n_samples):
        tr = trace_phases(replace(config, seed=config.seed + s), node, max(update_index, 1))
        if len(tr) > update_index:
            out.append(tr[update_index])
    return np.asarray(out)


def normality_diagnostic(config: SimConfig, update_index: int, n_samples: int, node: int = 0) -> NormalityReport:
    """Moments and KS distances of the traced phase against fitted normal and uniform laws."""
    if update_index < 0:
        raise ValueError("update_index must be >= 0")
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    x = phase_samples(config, update_index, n_samples, node)
    m, s = float(x.mean()), float(x.std(ddof=1))
    half = math.sqrt(3.0) * s
    return NormalityReport(
        update_index=update_index,
        n_samples=int(x.size),
        mean=m,
        std=s,
        skewness=float(stats.skew(x)),
        excess_kurtosis=float(stats.kurtosis(x, fisher=True)),
        ks_normal=float(stats.kstest(x, "norm", args=(m, s)).statistic),
        ks_uniform=float(stats.kstest(x, "uniform", args=(m - half, 2 * half)).statistic),
    )
