"""Ring phases, protocol parameters and the measurement-noise model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT12 = math.sqrt(12.0)
# std of a phase drawn uniformly on the whole ring
UNIFORM_RING_STD = 1.0 / SQRT12


def wrap(x: float) -> float:
    """Reduce ``x`` modulo 1 into [0, 1)."""
    r = x - math.floor(x)
    # x - floor(x) can round up to exactly 1.0 for tiny negative x
    return 0.0 if r >= 1.0 else r


@dataclass(frozen=True, order=True)
class Phase:
    """A point on the unit firing ring, stored reduced modulo 1."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", wrap(float(self.value)))

    def __float__(self):
        return self.value

    def __add__(self, other):
        return phase_add(self, float(other))


def _as_float(p) -> float:
    return p.value if isinstance(p, Phase) else float(p)


def phase_add(p, x: float) -> Phase:
    return Phase(_as_float(p) + x)


def ring_distance(a, b) -> float:
    """Shortest arc length between two ring points, in [0, 0.5]."""
    d = abs(wrap(_as_float(a)) - wrap(_as_float(b)))
    return min(d, 1.0 - d)


@dataclass(frozen=True)
class ProtocolParams:
    """Parameters of one experiment cell.

    ``sigma_delta_seconds`` is a time; every phase-domain computation uses
    :attr:`sigma_delta`, the value normalised by the period ``T``.
    """

    W: int
    alpha: float
    b_thres: float
    c_conf: float = 0.9999
    T: float = 1.0
    sigma_delta_seconds: float = 0.34e-3
    misfire_prob: float = 0.004

    def __post_init__(self):
        if isinstance(self.W, bool) or int(self.W) != self.W or self.W < 2:
            raise ValueError(f"W must be an integer >= 2, got {self.W!r}")
        object.__setattr__(self, "W", int(self.W))
        _check_open("alpha", self.alpha, 0.0, 1.0)
        _check_open("b_thres", self.b_thres, 0.0, 0.5)
        _check_open("c_conf", self.c_conf, 0.0, 1.0)
        if not self.T > 0:
            raise ValueError(f"T must be > 0, got {self.T!r}")
        if not self.sigma_delta_seconds >= 0:
            raise ValueError(f"sigma_delta_seconds must be >= 0, got {self.sigma_delta_seconds!r}")
        if not 0.0 <= self.misfire_prob < 1.0:
            raise ValueError(f"misfire_prob must be in [0, 1), got {self.misfire_prob!r}")
        if self.W >= math.floor(1.0 / self.b_thres):
            raise ValueError(
                f"W={self.W} exceeds the slot capacity floor(1/b_thres)={math.floor(1.0 / self.b_thres)}"
            )

    @property
    def sigma_delta(self) -> float:
        return self.sigma_delta_seconds / self.T

    def replace(self, **changes) -> "ProtocolParams":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return ProtocolParams(**kw)


def _check_open(name, value, lo, hi):
    if not lo < value < hi:
        raise ValueError(f"{name} must lie in the open interval ({lo:g},{hi:g}), got {value!r}")


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean uniform noise with standard deviation ``sigma``."""

    sigma: float
    kind: str = field(default="uniform-zero-mean")

    def __post_init__(self):
        if self.kind != "uniform-zero-mean":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def half_width(self) -> float:
        return self.sigma * math.sqrt(3.0)

    def sample(self, rng: np.random.Generator, size=None):
        h = self.half_width
        return rng.uniform(-h, h, size=size)
