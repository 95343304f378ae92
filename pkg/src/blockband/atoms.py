"""Atom variables: the scalar distribution that fills every matrix entry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .report import make_rng

KINDS = ("gaussian-complex", "gaussian-real", "rademacher")


def _gaussian_complex_moment(p: float) -> float:
    # |xi|^2 ~ Exp(1)
    return math.gamma(1.0 + p / 2.0)


def _gaussian_real_moment(p: float) -> float:
    return 2.0 ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


_ANALYTIC_MOMENTS: dict[str, Callable[[float], float]] = {
    "gaussian-complex": _gaussian_complex_moment,
    "gaussian-real": _gaussian_real_moment,
    "rademacher": lambda p: 1.0,
}

# E[xi^2]; zero for circularly symmetric complex atoms
_PSEUDO_VARIANCE = {"gaussian-complex": 0.0, "gaussian-real": 1.0, "rademacher": 1.0}


@dataclass(frozen=True)
class AtomDistribution:
    """Description of an atom variable.

    Built-in kinds are ``gaussian-complex``, ``gaussian-real`` and
    ``rademacher``.  ``kind="custom"`` requires a ``sampler`` (see
    :func:`standardize`).  ``epsilon`` is recorded as metadata only.
    """

    kind: str
    moment_profile: Mapping[float, float] = field(default_factory=dict)
    fourth_plus_epsilon: bool = True
    epsilon: float | None = None
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = field(default=None, compare=False)
    real: bool = False
    pseudo_variance: complex | None = None

    def __post_init__(self):
        if self.kind not in KINDS and self.kind != "custom":
            raise ValueError(f"unknown atom kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom" and self.sampler is None:
            raise ValueError("custom atom kinds need a sampler")
        object.__setattr__(self, "moment_profile", MappingProxyType(dict(self.moment_profile)))

    def __reduce__(self):
        # the read-only profile view does not pickle; rebuild from a plain dict
        return (AtomDistribution, (self.kind, dict(self.moment_profile), self.fourth_plus_epsilon, self.epsilon,
                                   self.sampler, self.real, self.pseudo_variance))

    @classmethod
    def named(cls, kind: str) -> "AtomDistribution":
        if kind not in KINDS:
            raise ValueError(f"unknown atom kind {kind!r}; expected one of {KINDS}")
        profile = {p: _ANALYTIC_MOMENTS[kind](p) for p in (1, 2, 4, 8)}
        return cls(kind=kind, moment_profile=profile, real=kind != "gaussian-complex",
                   pseudo_variance=_PSEUDO_VARIANCE[kind])

    @property
    def is_real(self) -> bool:
        return self.real

    def __str__(self) -> str:
        return self.kind


def as_atom(dist: "AtomDistribution | str") -> AtomDistribution:
    return dist if isinstance(dist, AtomDistribution) else AtomDistribution.named(dist)


def standardize(draw: Callable[[np.random.Generator, int], np.ndarray], mean: complex, std: float,
                moment_profile: Mapping[float, float] | None = None, real: bool = False,
                pseudo_variance: complex | None = None) -> AtomDistribution:
    """Wrap a raw sampler as a mean-zero, unit-variance atom.

    ``moment_profile`` should hold the absolute moments of the *standardized*
    variable; :func:`moment` only answers for the listed ``p``.
    """
    if std <= 0:
        raise ValueError("std must be positive")

    def sampler(rng: np.random.Generator, count: int) -> np.ndarray:
        return (np.asarray(draw(rng, count)) - mean) / std

    profile = {2: 1.0}
    profile.update(moment_profile or {})
    return AtomDistribution(kind="custom", moment_profile=profile, sampler=sampler,
                            real=real, pseudo_variance=pseudo_variance)


def draw(dist: AtomDistribution, rng: np.random.Generator, shape) -> np.ndarray:
    """Draw an array of iid atoms in the atom's natural dtype.

    Real kinds come back as float64 so that downstream dense work can stay in
    real arithmetic; complex kinds as complex128.
    """
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    count = int(np.prod(shape, dtype=np.int64))
    if dist.kind == "gaussian-complex":
        # interleaved (re, im) pairs viewed as complex; each part has variance 1/2
        out = rng.standard_normal(2 * count).view(np.complex128)
        out *= math.sqrt(0.5)
    elif dist.kind == "gaussian-real":
        out = rng.standard_normal(count)
    elif dist.kind == "rademacher":
        out = rng.integers(0, 2, size=count, dtype=np.int8).astype(np.float64)
        out *= 2.0
        out -= 1.0
    else:
        out = np.asarray(dist.sampler(rng, count))
        if out.shape != (count,):
            raise ValueError("custom sampler returned the wrong number of values")
    return out.reshape(shape)


def sample(dist: "AtomDistribution | str", seed, count: int) -> np.ndarray:
    """``count`` iid draws from ``dist`` as a complex vector, deterministic in ``seed``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    dist = as_atom(dist)
    return draw(dist, make_rng(seed), count).astype(np.complex128, copy=False)


def moment(dist: "AtomDistribution | str", p: float) -> float:
    """Exact absolute moment E|xi|^p."""
    dist = as_atom(dist)
    if p <= 0:
        raise ValueError("p must be positive")
    if dist.kind in _ANALYTIC_MOMENTS:
        return _ANALYTIC_MOMENTS[dist.kind](float(p))
    for key, val in dist.moment_profile.items():
        if math.isclose(float(key), float(p)):
            return float(val)
    raise ValueError(f"moment of order {p} not declared for this custom atom")


def pseudo_variance(dist: "AtomDistribution | str") -> complex:
    """E[xi^2] (as opposed to E|xi|^2 = 1)."""
    dist = as_atom(dist)
    if dist.kind in _PSEUDO_VARIANCE:
        return _PSEUDO_VARIANCE[dist.kind]
    if dist.pseudo_variance is None:
        raise ValueError("pseudo-variance not declared for this custom atom")
    return dist.pseudo_variance
