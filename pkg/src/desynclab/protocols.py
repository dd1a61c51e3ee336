"""Per-node DESYNC and PCO transition rules.

Phases handed to these functions are measured in the updating node's own
frame at the instant of the update: ``own`` is the fraction of a period
since the node last fired, neighbour phases are the fraction of a period
since that neighbour fired.  The scalar ``*_phase`` helpers are what the
simulator calls in its inner loop; the state-level functions wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .core import Phase, wrap


@dataclass(frozen=True)
class DesyncNodeState:
    own_phase: Phase
    # phase of the last firing heard before our own, absent until one is heard
    prev_fire_phase: Optional[Phase] = None
    streak: int = 0


@dataclass(frozen=True)
class PcoNodeState:
    own_phase: Phase
    streak: int = 0


def desync_phase(own: float, prev: float, nxt: float, alpha: float,
                 n_own: float = 0.0, n_prev: float = 0.0, n_next: float = 0.0) -> float:
    """Noisy DESYNC mixture of the three measured phases, reduced mod 1."""
    return wrap((1.0 - alpha) * (own + n_own) + 0.5 * alpha * ((prev + n_prev) + (nxt + n_next)))


def desync_update(state: DesyncNodeState, phi_prev, phi_next, alpha: float,
                  noise: Sequence[float] = (0.0, 0.0, 0.0)) -> DesyncNodeState:
    """Move the node's phase towards the midpoint of its two phase neighbours.

    Applied once per cycle, when the firing after the node's own is heard,
    so ``phi_next`` is normally 0.  ``noise`` holds the own, previous and
    next measurement errors in that order.
    """
    n_own, n_prev, n_next = noise
    new = desync_phase(float(state.own_phase), float(phi_prev), float(phi_next), alpha, n_own, n_prev, n_next)
    return replace(state, own_phase=Phase(new))


def pco_phase(own: float, alpha: float, W: int, noise: float = 0.0) -> float:
    """Noisy PCO contraction towards ``1 - 1/W``, reduced mod 1."""
    return wrap((1.0 - alpha) * (own + noise) + alpha * (1.0 - 1.0 / W))


def in_listening_interval(own: float, W: int) -> bool:
    return 1.0 - 1.0 / W < own < 1.0


def pco_update(state: PcoNodeState, alpha: float, W: int, noise: float = 0.0) -> PcoNodeState:
    """Inhibitory PCO update.  Gating on the listening interval is the caller's job."""
    return replace(state, own_phase=Phase(pco_phase(float(state.own_phase), alpha, W, noise)))


def gap_converged(gap: float, W: int, b_thres: float) -> bool:
    """Whether a firing gap (in periods) is within ``b_thres`` of a fair slot."""
    return abs(gap - 1.0 / W) <= b_thres


def convergence_check(own, prev, W: int, b_thres: float) -> bool:
    """Slot check on the ring: own firing versus the firing heard just before it."""
    gap = wrap(float(own) - float(prev))
    return gap_converged(gap, W, b_thres)


def advance_streak(streak: int, ok: bool) -> int:
    return streak + 1 if ok else 0
