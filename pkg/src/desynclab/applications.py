"""Bandwidth under node churn and firing-period selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import estimate_cycles
from .core import ProtocolParams

PERIOD_TOL_S = 1e-3
PERIOD_MAX_ITER = 50


@dataclass(frozen=True)
class ChurnScenario:
    """A network of ``W`` nodes sharing ``B_wsn`` bps whose membership changes every ``T_swap`` s."""

    W: int
    B_wsn: float
    T: float
    T_swap: float
    method: str = "desync"

    def __post_init__(self):
        if self.W < 2:
            raise ValueError("W must be >= 2")
        if not (self.B_wsn > 0 and self.T > 0 and self.T_swap > 0):
            raise ValueError("B_wsn, T and T_swap must be > 0")
        if self.method.lower() not in ("desync", "pco"):
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "method", self.method.lower())


@dataclass(frozen=True)
class BandwidthResult:
    bps: float
    cycles: int
    clamped: bool
    noise_limited: bool


def churn_bandwidth(k: float, W: int, B_wsn: float, T: float, T_swap: float) -> tuple:
    """``(1 - k T / T_swap) B_wsn / W`` clamped at 0; returns ``(bps, clamped)``."""
    frac = 1.0 - k * T / T_swap
    if frac <= 0.0:
        return 0.0, True
    return frac * B_wsn / W, False


def bandwidth_per_node(s: ChurnScenario, params: ProtocolParams, pco_mode: str = "cycle") -> BandwidthResult:
    """Expected per-node bandwidth, with convergence cycles taken from the model.

    ``params`` supplies alpha, b_thres, c_conf and the noise; its W and T are
    replaced by the scenario's.
    """
    cell = params.replace(W=s.W, T=s.T)
    est = estimate_cycles(cell, s.method, pco_mode)
    bps, clamped = churn_bandwidth(est.cycles, s.W, s.B_wsn, s.T, s.T_swap)
    return BandwidthResult(bps, est.cycles, clamped, est.noise_limited)


def bandwidth_per_node_mc(s: ChurnScenario, params: ProtocolParams, swap_low: float, swap_high: float,
                          n_draws: int = 100_000, seed: int = 0, pco_mode: str = "cycle") -> BandwidthResult:
    """As :func:`bandwidth_per_node` but averaging over ``T_swap ~ U[swap_low, swap_high]``."""
    if not 0 < swap_low < swap_high:
        raise ValueError("need 0 < swap_low < swap_high")
    cell = params.replace(W=s.W, T=s.T)
    est = estimate_cycles(cell, s.method, pco_mode)
    swaps = np.random.default_rng(seed).uniform(swap_low, swap_high, n_draws)
    frac = np.maximum(1.0 - est.cycles * s.T / swaps, 0.0)
    return BandwidthResult(float(frac.mean()) * s.B_wsn / s.W, est.cycles, bool((frac == 0).any()), est.noise_limited)


@dataclass(frozen=True)
class PeriodResult:
    T: float
    cycles: int
    iterations: int
    converged: bool
    previous_T: Optional[float] = None
    noise_limited: bool = False


def solve_period(T_sstate: float, params: ProtocolParams, method: str, renorm: bool = True,
                 pco_mode: str = "cycle") -> PeriodResult:
    """Firing period ``T`` with ``k(T) * T = T_sstate``.

    The noise is a time, so its phase-domain value grows as ``T`` shrinks.
    With ``renorm`` T is solved by fixed-point iteration from
    ``T_sstate / k(T=1 s)``; without it that starting value is returned.
    ``params.T`` is ignored.
    """
    if not T_sstate > 0:
        raise ValueError("T_sstate must be > 0")

    def k_at(T):
        return estimate_cycles(params.replace(T=T), method, pco_mode)

    est = k_at(1.0)
    T = T_sstate / est.cycles
    if not renorm:
        return PeriodResult(T, est.cycles, 0, True, None, est.noise_limited)
    prev = None
    for it in range(1, PERIOD_MAX_ITER + 1):
        est = k_at(T)
        new = T_sstate / est.cycles
        prev, T = T, new
        if abs(T - prev) < PERIOD_TOL_S:
            return PeriodResult(T, est.cycles, it, True, prev, est.noise_limited)
    return PeriodResult(T, est.cycles, PERIOD_MAX_ITER, False, prev, est.noise_limited)


def expected_swap_fraction(k: float, T: float, swap_low: float, swap_high: float) -> float:
    """Closed form of ``E[1 - kT/T_swap]`` for uniform ``T_swap`` (no clamping)."""
    return 1.0 - k * T * math.log(swap_high / swap_low) / (swap_high - swap_low)
