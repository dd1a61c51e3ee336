"""Closed-form convergence machinery for DESYNC and PCO desynchronisation.

Everything here is a pure function of :class:`~desynclab.core.ProtocolParams`.
Phases are normalised to the firing period, so ``sigma_delta`` is used
rather than the raw time in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .core import UNIFORM_RING_STD, ProtocolParams

SQRT2 = math.sqrt(2.0)
SQRTPI = math.sqrt(math.pi)
MAX_ITERATIONS = 100_000
# relative resolution below which estimator objectives are treated as equal
TIE_RTOL = 1e-12


class CapExceededError(RuntimeError):
    """An estimator scan hit its iteration cap without settling."""


# --------------------------------------------------------------------------
# special functions

def erf(x: float) -> float:
    return math.erf(x)


def _erf_inv_maclaurin_coeffs(n: int) -> list:
    c = [1.0]
    for k in range(1, n):
        c.append(sum(c[m] * c[k - 1 - m] / ((m + 1) * (2 * m + 1)) for m in range(k)))
    return c


_MACLAURIN = _erf_inv_maclaurin_coeffs(12)


def erf_inv_series(u: float, terms: int = 12) -> float:
    """Truncated Maclaurin series of the inverse error function.

    The first three terms are ``(sqrt(pi)/2) (u + pi/12 u^3 + 7 pi^2/480 u^5)``.
    Accurate near 0 only; close to +-1 it badly underestimates.
    """
    z = 0.5 * SQRTPI * u
    return sum(_MACLAURIN[k] / (2 * k + 1) * z ** (2 * k + 1) for k in range(min(terms, len(_MACLAURIN))))


def erf_inv(u: float) -> float:
    """Inverse error function.

    Seeded with the Maclaurin series, then refined by safeguarded Newton
    iteration on :func:`erf` inside a bisection bracket.
    """
    if not -1.0 < u < 1.0:
        raise ValueError(f"erf_inv is defined on (-1, 1), got {u!r}")
    if u == 0.0:
        return 0.0
    if u < 0:
        return -erf_inv(-u)

    lo, hi = 0.0, 1.0
    while math.erf(hi) < u:
        lo, hi = hi, 2.0 * hi
    x = min(max(erf_inv_series(u), lo), hi)
    for _ in range(200):
        f = math.erf(x) - u
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        slope = 2.0 / SQRTPI * math.exp(-x * x)
        step = f / slope if slope > 0 else math.inf
        nxt = x - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 4e-16 * max(1.0, abs(x)) or hi - lo <= 4e-16 * hi:
            return nxt
        x = nxt
    return x


def target_sigma(b_thres: float, c_conf: float) -> float:
    """Phase std at which ``|phase - mean| <= b_thres`` holds with probability ``c_conf``."""
    if not b_thres > 0:
        raise ValueError("b_thres must be > 0")
    return b_thres / (SQRT2 * erf_inv(c_conf))


# --------------------------------------------------------------------------
# coupling kernel

@dataclass(frozen=True)
class CouplingKernel:
    alpha: float
    W: int

    @property
    def taps(self) -> np.ndarray:
        a = self.alpha
        return np.array([a / 2.0, 1.0 - a, a / 2.0])

    @property
    def period(self) -> int:
        # short rings would fold the 3-tap kernel onto itself
        return max(int(self.W), 5)


def circular_convolve(a: Sequence[float], b: Sequence[float], period: int) -> np.ndarray:
    """Circular convolution of ``a`` and ``b`` with the given period."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if period < max(len(a), len(b)) or period < 1:
        raise ValueError(f"period {period} shorter than the inputs ({len(a)}, {len(b)})")
    out = np.zeros(period)
    for m, am in enumerate(a):
        if am == 0.0:
            continue
        idx = (m + np.arange(len(b))) % period
        np.add.at(out, idx, am * b)
    return out


def _kernel_powers(alpha: float, W: int) -> Iterator[np.ndarray]:
    """Yield v^(1), v^(2), ... as length-``period`` vectors centred on index 0."""
    P = CouplingKernel(alpha, W).period
    cur = np.zeros(P)
    cur[0] = 1.0 - alpha
    cur[1] = cur[-1] = alpha / 2.0
    side = alpha / 2.0
    centre = 1.0 - alpha
    while True:
        yield cur
        cur = centre * cur + side * (np.roll(cur, 1) + np.roll(cur, -1))


def kernel_power_norms(alpha: float, W: int, k_max: int) -> np.ndarray:
    """Squared 2-norms of the j-fold circular self-convolution, j = 1..k_max."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    out = np.empty(k_max)
    for j, v in zip(range(k_max), _kernel_powers(alpha, W)):
        out[j] = float(v @ v)
    return out


# --------------------------------------------------------------------------
# sigma trajectories

@dataclass(frozen=True)
class SigmaTrajectory:
    """Standard deviations indexed from 1 (``values[0]`` is index 1)."""

    values: tuple
    params: ProtocolParams

    def __len__(self):
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        if index < 1:
            raise IndexError("trajectory is indexed from 1")
        return self.values[index - 1]


def _desync_sigmas(params: ProtocolParams) -> Iterator[float]:
    s0 = UNIFORM_RING_STD ** 2
    sd2 = params.sigma_delta ** 2
    acc = 0.0
    for v in _kernel_powers(params.alpha, params.W):
        n = float(v @ v)
        acc += n
        yield math.sqrt(n * s0 + acc * sd2)


def sigma_desync(params: ProtocolParams, k: int) -> float:
    """Std of a node's phase after ``k`` DESYNC cycles."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for j, s in enumerate(_desync_sigmas(params), start=1):
        if j == k:
            return s


def sigma_pco(params: ProtocolParams, l: int) -> float:
    """Std of a node's phase after ``l`` PCO phase updates."""
    if l < 1:
        raise ValueError("l must be >= 1")
    a = params.alpha
    q = (1.0 - a) ** (2 * l)
    noise_gain = (a - 1.0) ** 2 / (a * (a - 2.0))
    return math.sqrt(q * UNIFORM_RING_STD ** 2 + noise_gain * (q - 1.0) * params.sigma_delta ** 2)


def pco_noise_floor(params: ProtocolParams) -> float:
    a = params.alpha
    return params.sigma_delta * (1.0 - a) / math.sqrt(a * (2.0 - a))


def expected_updates_at_sigma(W: int, sigma: float) -> float:
    """Expected PCO phase updates in one cycle when the phase std is ``sigma``."""
    c = W * sigma * SQRT2
    if c == 0.0:
        return 0.5
    return math.erf((W // 2 + 1) / c) - 0.5 * math.erf(1.0 / c)


def expected_updates_per_cycle(params: ProtocolParams, l: int) -> float:
    """Expected number of PCO phase updates in a cycle whose phase std is ``sigma_pco(params, l)``."""
    if l < 2:
        raise ValueError("l must be >= 2; the first cycle contributes 1 - 1/W updates")
    return expected_updates_at_sigma(params.W, sigma_pco(params, l))


def first_cycle_updates(W: int) -> float:
    return 1.0 - 1.0 / W


# --------------------------------------------------------------------------
# estimators

@dataclass(frozen=True)
class EstimateResult:
    cycles: int
    achieved_sigma: float
    target_sigma: float
    trajectory: SigmaTrajectory
    noise_limited: bool = False
    # PCO only: phase updates to steady state and the expected cumulative
    # update count after each cycle (index 1 = first cycle)
    phase_updates: Optional[int] = None
    cumulative_updates: tuple = field(default=())


def _argmin_scan(sigmas: Iterator[float], target: float, cap: int):
    """Smallest index minimising ``|sigma_k - target|`` over k >= 1.

    Objectives within ``TIE_RTOL * target`` of the minimum count as tied.
    Without this a trajectory that only approaches its floor would have no
    attained minimum, and the answer would be decided by rounding noise.
    Valid for trajectories that fall and then flatten or rise (both model
    trajectories are of this shape).  Returns
    ``(k, sigma_k, values, noise_limited)``.
    """
    tol = TIE_RTOL * target
    values = []
    best = math.inf
    prev = math.inf
    for k, s in enumerate(sigmas, start=1):
        if k > cap:
            raise CapExceededError(f"no argmin within {cap} iterations")
        values.append(s)
        best = min(best, abs(s - target))
        # once sigma stops falling it either rises away from the target or
        # has flattened out: the objective cannot improve any more
        if s >= prev and (s - target >= best or s - prev <= tol):
            break
        prev = s
    k = next(i for i, v in enumerate(values, start=1) if abs(v - target) <= best + tol)
    return k, values[k - 1], values, min(values) > target


def estimate_desync_cycles(params: ProtocolParams, cap: int = MAX_ITERATIONS) -> EstimateResult:
    """Firing cycles until DESYNC is in steady state with confidence ``c_conf``."""
    t = target_sigma(params.b_thres, params.c_conf)
    k, s, values, limited = _argmin_scan(_desync_sigmas(params), t, cap)
    return EstimateResult(
        cycles=k,
        achieved_sigma=s,
        target_sigma=t,
        trajectory=SigmaTrajectory(tuple(values), params),
        noise_limited=limited,
    )


def _pco_index(mode: str) -> Callable[[int, float], int]:
    if mode == "cycle":
        return lambda cycle, done: cycle
    if mode == "cumulative":
        return lambda cycle, done: max(1, math.ceil(done))
    raise ValueError(f"unknown PCO index mode {mode!r} (expected 'cycle' or 'cumulative')")


def estimate_pco_cycles(params: ProtocolParams, mode: str = "cycle", cap: int = MAX_ITERATIONS) -> EstimateResult:
    """Firing cycles until PCO desynchronisation is in steady state.

    First finds the number of phase updates needed, then matches it to the
    expected cumulative update count per firing cycle.  ``mode`` selects
    which sigma drives the per-cycle update count: ``"cycle"`` uses
    ``sigma_pco(cycle)``, ``"cumulative"`` uses the sigma after the updates
    already expected to have happened.
    """
    index = _pco_index(mode)
    t = target_sigma(params.b_thres, params.c_conf)

    def sigmas():
        l = 1
        while True:
            yield sigma_pco(params, l)
            l += 1

    l_ss, s, values, limited = _argmin_scan(sigmas(), t, cap)

    W = params.W
    u = [first_cycle_updates(W)]
    k = 1
    while u[-1] < l_ss:
        k += 1
        if k > cap:
            raise CapExceededError(f"update count did not reach {l_ss} within {cap} cycles")
        sigma = sigma_pco(params, index(k, u[-1]))
        u.append(u[-1] + expected_updates_at_sigma(W, sigma))
    if len(u) == 1:
        # the cycle count is taken over k >= 2
        u.append(u[-1] + expected_updates_at_sigma(W, sigma_pco(params, index(2, u[-1]))))
        k = 2
    # u is increasing, so the argmin over k >= 2 is the last point below or the first at/above
    if k > 2 and abs(u[k - 2] - l_ss) <= abs(u[k - 1] - l_ss):
        k -= 1
    return EstimateResult(
        cycles=k,
        achieved_sigma=s,
        target_sigma=t,
        trajectory=SigmaTrajectory(tuple(values), params),
        noise_limited=limited,
        phase_updates=l_ss,
        cumulative_updates=tuple(u),
    )


def estimate_cycles(params: ProtocolParams, protocol: str, pco_mode: str = "cycle") -> EstimateResult:
    protocol = protocol.lower()
    if protocol == "desync":
        return estimate_desync_cycles(params)
    if protocol == "pco":
        return estimate_pco_cycles(params, mode=pco_mode)
    raise ValueError(f"unknown protocol {protocol!r}")


# --------------------------------------------------------------------------
# prior-work comparators

def desync_order_conjecture(params: ProtocolParams, scale: float = 1.0) -> float:
    """``scale * W^2 * ln(1/b_thres) / alpha``; the constant is not known a priori."""
    if not scale > 0:
        raise ValueError("scale must be > 0")
    return scale * params.W ** 2 * math.log(1.0 / params.b_thres) / params.alpha


def _order_conjecture_raw(W: int, alpha: float, b_thres: float) -> float:
    return W ** 2 * math.log(1.0 / b_thres) / alpha


@dataclass(frozen=True)
class LowerBound:
    value: Optional[int]
    assumption_violated: bool
    singular: bool = False


def pco_lower_bound(params: ProtocolParams) -> LowerBound:
    """Ceiling-form lower bound on PCO firing cycles, unclamped (often negative)."""
    a, W = params.alpha, params.W
    violated = not (1.0 - 1.0 / W > a)
    den = math.log(1.0 - a) + math.log(W)
    if abs(den) < 1e-12:
        return LowerBound(None, violated, singular=True)
    # ln(2 + 2/(a^W (1-a))) = ln 2 + ln(1 + exp(-(W ln a + ln(1-a))))
    inner = math.log(2.0) + float(np.logaddexp(0.0, -(W * math.log(a) + math.log(1.0 - a))))
    num = math.log(params.b_thres) - inner
    return LowerBound(int(math.ceil(num / den)), violated)
