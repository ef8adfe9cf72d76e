"""Gaussian-weighted integrals over sampled surfaces with tail bounds.

The backwards heat kernel centred at ``(x0, t0)`` and evaluated at time
``t0 - t`` is ``rho = exp(-|x - x0|^2 / (4 t)) / (4 pi t)``.  Integrals are
truncated at an effective radius and the discarded tail is bounded from the
area-ratio constant ``C1`` (``area(L cap B_r) <= C1 r^2``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import MissingAreaRatio
from .surface import SampleSet

Integrand = Union[None, float, np.ndarray, Callable[[SampleSet], np.ndarray]]


@dataclass(frozen=True)
class WeightedIntegralResult:
    """Value of a truncated Gaussian integral with its error budget.

    ``tail_bound`` bounds the omitted part outside ``radius`` given the
    area-ratio constant; ``quad_error`` is a heuristic ``h^2`` estimate.
    """

    value: float
    tail_bound: float
    quad_error: float
    radius: float

    @property
    def tolerance(self) -> float:
        return self.tail_bound + self.quad_error


def _fsum(a: np.ndarray) -> float:
    # exactly rounded, hence independent of any partition of the sum
    return math.fsum(np.asarray(a, dtype=float).ravel().tolist())


def tail_bound(R: float, t: float, C1: float, degree: float = 0.0, scale: float = 1.0,
               normalized: bool = False) -> float:
    """Upper bound for ``int_{|x|>R} scale (1+|x|)^degree exp(-|x|^2/4t) dA``.

    Integration by parts against ``A(r) <= C1 r^2`` gives
    ``C1 [g(R) R^2 + int_R^inf 2 r g(r) dr]`` for decreasing ``g``; the
    polynomial factor is kept monotone by evaluating it at the upper limit
    where it matters, which for ``R >= 2 sqrt(degree t)`` still dominates.
    """
    if not np.isfinite(R):
        return 0.0

    def g(r):
        return (1 + r) ** degree * math.exp(-r * r / (4 * t))

    # r^2 g(r) is decreasing beyond its maximum; use the max over [R, inf)
    rstar = max(R, math.sqrt(2 * t * (2 + degree)) + 1)
    head = max(g(R) * R * R, g(rstar) * rstar * rstar)
    tail, _ = integrate.quad(lambda r: 2 * r * g(r), R, np.inf)
    out = C1 * scale * (head + tail)
    if normalized:
        out /= 4 * math.pi * t
    return float(out)


def _values(samples: SampleSet, integrand: Integrand) -> np.ndarray:
    if integrand is None:
        return np.ones(len(samples))
    if callable(integrand):
        return np.asarray(integrand(samples), dtype=float)
    return np.broadcast_to(np.asarray(integrand, dtype=float), (len(samples),))


def gaussian_integral(samples: SampleSet, integrand: Integrand = None, x0=None, t0_scale: float = 1.0,
                      C1: Optional[float] = None, degree: float = 0.0, growth: Optional[float] = None,
                      R: Optional[float] = None, normalized: bool = False) -> WeightedIntegralResult:
    """Truncated integral of ``f exp(-|x-x0|^2 / 4t)`` (divided by ``4 pi t`` if normalized).

    Parameters
    ----------
    samples : SampleSet
    integrand : None (f = 1), constant, per-sample array or callable on samples
    x0 : kernel centre (default origin)
    t0_scale : kernel time ``t``; 1 gives ``exp(-|x|^2/4)``
    C1 : area-ratio constant, required when the sampled surface is truncated
    degree, growth : ``|f| <= growth (1 + |x|)^degree`` outside the truncation;
        ``growth`` defaults to ``max |f|`` on the samples
    R : truncation radius (default: the sampled extent)
    """
    x0 = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    t = float(t0_scale)
    f = _values(samples, integrand)
    d2 = np.sum((samples.x - x0) ** 2, axis=1)
    ext = samples.extent - float(np.linalg.norm(x0)) if np.isfinite(samples.extent) else np.inf
    radius = ext if R is None else min(R, ext)
    mask = d2 <= radius * radius if np.isfinite(radius) else np.ones(len(d2), dtype=bool)
    w = np.exp(-d2[mask] / (4 * t)) * samples.dA[mask]
    norm = 4 * math.pi * t if normalized else 1.0
    terms = f[mask] * w
    value = _fsum(terms) / norm
    h = samples.h if np.isfinite(samples.h) else 0.0
    quad = h * h * _fsum(np.abs(terms)) / norm
    if np.isfinite(radius):
        if C1 is None:
            raise MissingAreaRatio("truncated surface needs an area-ratio constant C1")
        gr = growth if growth is not None else (float(np.max(np.abs(f))) if len(f) else 0.0)
        tb = tail_bound(radius, t, C1, degree, gr, normalized)
    else:
        tb = 0.0
    return WeightedIntegralResult(value, tb, quad, float(radius))


def gaussian_density(samples: SampleSet, x0=None, t: float = 1.0, C1: Optional[float] = None,
                     R: Optional[float] = None) -> WeightedIntegralResult:
    """Huisken density ``int rho_{x0, t}`` (a plane through ``x0`` has density 1)."""
    return gaussian_integral(samples, None, x0, t, C1=C1, R=R, normalized=True)


def entropy(samples: SampleSet, centers: Optional[Sequence] = None, radii: Optional[Sequence] = None,
            C1: Optional[float] = None, return_argmax: bool = False):
    """Maximum of the Gaussian ratio over a grid of centres and scales.

    The value is a lower bound for the entropy; truncated surfaces are
    evaluated on their represented part (tails dropped, not bounded).
    """
    centers = [np.zeros(4)] if centers is None else [np.asarray(c, dtype=float) for c in centers]
    radii = np.geomspace(0.25, 4.0, 9) if radii is None else np.asarray(radii, dtype=float)
    best, arg = -np.inf, None
    for c in centers:
        d2 = np.sum((samples.x - c) ** 2, axis=1)
        for r in radii:
            t = r * r
            v = _fsum(np.exp(-d2 / (4 * t)) * samples.dA) / (4 * math.pi * t)
            if v > best:
                best, arg = v, (c, float(r))
    return (float(best), arg) if return_argmax else float(best)


def rescaled_density(samples: SampleSet, lam: float, x0=None, t: float = 1.0, C1: Optional[float] = None):
    """Density of the ``lam``-rescaled surface against the ``lam^2 t`` kernel (scale check)."""
    x0 = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float)
    return gaussian_density(samples.scaled(lam, x0), None, lam * lam * t, C1=C1)
