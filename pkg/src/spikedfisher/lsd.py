"""Limiting spectral distribution of the non-spiked Fisher matrix part.

A two-sample Fisher matrix F = S1 S2^{-1} built from p-dimensional samples of
sizes n1 and n2 has, after the finitely many spiked directions are removed, a
deterministic limiting spectral distribution (LSD) governed by the base
population spectrum H and the dimension ratios y1 = (p-M)/n1, y2 = (p-M)/n2.
When H is a point mass at 1 this LSD is the Wachter law with a closed-form
density on a compact interval [a, b].

This module evaluates the five transform values needed by the spike theory at
a real point lambda outside [a, b]:

    m(lam)  = int 1/(x-lam) dF(x)          m2(lam) = int 1/(lam-x)^2 dF(x)
    m3(lam) = int x/(lam-x)^2 dF(x)

together with the companion transforms m_under, m_under2 of the dual matrix
whose spectrum consists of the same nonzero eigenvalues padded with n1-(p-M)
zeros.  The companions follow exactly from m and m2:

    m_under(lam)  = -(1-y1)/lam   + y1 * m(lam)
    m_under2(lam) = (1-y1)/lam^2  + y1 * m2(lam)

Two evaluation backends are provided: adaptive quadrature on the closed-form
Wachter density (requires H = delta_1), and a trace-resolvent Monte Carlo
estimate from simulated non-spiked Fisher matrices (any atomic H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.linalg import eigh

from .errors import (
    ConfigError,
    DomainError,
    SpikeInsideBulkError,
    UnsupportedModelError,
)

__all__ = [
    "SpectralModel",
    "SupportInterval",
    "StieltjesBundle",
    "wachter_support",
    "wachter_density",
    "stieltjes",
]

# Identity tolerance used when validating bundles on construction.
_IDENTITY_TOL = 1e-10
# Relative margin keeping evaluation points away from the support edges.
_EDGE_MARGIN = 1e-6


@dataclass(frozen=True)
class SpectralModel:
    """Base (non-spiked) eigenvalue measure plus dimension ratios.

    atoms: sequence of (t_i, w_i) pairs; positive locations, positive weights
    summing to 1.  y1 may be any positive real; y2 must lie in (0, 1) so that
    the second sample covariance matrix is invertible in the limit.
    """

    atoms: tuple[tuple[float, float], ...]
    y1: float
    y2: float

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(t), float(w)) for t, w in self.atoms))
        if not self.atoms:
            raise DomainError("spectral model needs at least one atom")
        ts = np.array([t for t, _ in self.atoms])
        ws = np.array([w for _, w in self.atoms])
        if np.any(ts <= 0):
            raise DomainError("atom locations must be positive")
        if np.any(ws <= 0):
            raise DomainError("atom weights must be positive")
        if abs(ws.sum() - 1.0) > 1e-12:
            raise DomainError(f"atom weights must sum to 1, got {ws.sum()!r}")
        if not (self.y1 > 0):
            raise DomainError("y1 must be positive")
        if not (0 < self.y2 < 1):
            raise DomainError("y2 must lie strictly in (0, 1)")

    @classmethod
    def unit(cls, y1: float, y2: float) -> "SpectralModel":
        """Model with all base eigenvalues equal to 1 (Wachter case)."""
        return cls(atoms=((1.0, 1.0),), y1=y1, y2=y2)

    @property
    def locations(self) -> np.ndarray:
        return np.array([t for t, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def is_unit_atom(self) -> bool:
        return len(self.atoms) == 1 and abs(self.atoms[0][0] - 1.0) < 1e-15


@dataclass(frozen=True)
class SupportInterval:
    """Closed support [a, b] of the bulk LSD, 0 < a < b."""

    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a < self.b):
            raise DomainError(f"invalid support interval ({self.a}, {self.b})")

    def margin(self) -> float:
        return _EDGE_MARGIN * (self.b - self.a)

    def contains(self, lam: float) -> bool:
        """True when lam is inside the support widened by the safety margin."""
        d = self.margin()
        return self.a - d <= lam <= self.b + d


@dataclass(frozen=True)
class StieltjesBundle:
    """The five transform values at one real point outside the support.

    Constructed via :meth:`from_transforms`, which derives m3 and the two
    companion values so the algebraic identities hold exactly.  Construction
    re-checks every identity so hand-built bundles cannot be inconsistent.
    """

    lam: float
    m: float
    m2: float
    m3: float
    m_under: float
    m_under2: float

    def __post_init__(self):
        if self.m2 <= 0 or self.m_under2 <= 0:
            raise DomainError("m2 and m_under2 are integrals of squares; must be > 0")
        scale = max(1.0, abs(self.lam) * self.m2, abs(self.m))
        if abs(self.m3 - (self.lam * self.m2 + self.m)) > _IDENTITY_TOL * scale:
            raise DomainError("bundle violates m3 = lam*m2 + m")
        # The companion relations share one ratio y1; recover it from each and
        # require agreement.  Skip only in the degenerate direction m ~ -1/lam.
        den1 = self.m + 1.0 / self.lam
        den2 = self.m2 - 1.0 / self.lam**2
        y1a = (self.m_under + 1.0 / self.lam) / den1 if abs(den1) > 1e-9 else None
        y1b = (self.m_under2 - 1.0 / self.lam**2) / den2 if abs(den2) > 1e-9 else None
        if y1a is not None and y1b is not None and abs(y1a - y1b) > 1e-6 * max(1.0, abs(y1a)):
            raise DomainError("bundle companion values disagree on the ratio y1")

    @classmethod
    def from_transforms(cls, lam: float, m: float, m2: float, y1: float) -> "StieltjesBundle":
        return cls(
            lam=lam,
            m=m,
            m2=m2,
            m3=lam * m2 + m,
            m_under=-(1.0 - y1) / lam + y1 * m,
            m_under2=(1.0 - y1) / lam**2 + y1 * m2,
        )


def wachter_support(model: SpectralModel) -> SupportInterval:
    """Support edges of the bulk LSD for the unit-atom base spectrum.

    a, b = (1 -+ h)^2 / (1 - y2)^2 with h = sqrt(y1 + y2 - y1*y2).
    """
    if not model.is_unit_atom:
        raise UnsupportedModelError(
            "closed-form support requires the unit-atom base spectrum; "
            "use the montecarlo backend for general atomic spectra"
        )
    h = math.sqrt(model.y1 + model.y2 - model.y1 * model.y2)
    s = (1.0 - model.y2) ** 2
    return SupportInterval(a=(1.0 - h) ** 2 / s, b=(1.0 + h) ** 2 / s)


def wachter_density(x, model: SpectralModel):
    """Density of the absolutely continuous Wachter part at x; zero outside
    [a, b].

    f(x) = (1 - y2) sqrt((b - x)(x - a)) / (2 pi x (y1 + y2 x))

    Integrates to 1 when y1 <= 1; for y1 > 1 the LSD adds an atom at zero
    with mass 1 - 1/y1 and the continuous part carries the rest.
    """
    sup = wachter_support(model)
    xs = np.asarray(x, dtype=float)
    if np.any(xs <= 0):
        raise DomainError("density is defined for positive x only")
    inside = (xs >= sup.a) & (xs <= sup.b)
    rad = np.where(inside, (sup.b - xs) * (xs - sup.a), 0.0)
    dens = (1.0 - model.y2) * np.sqrt(rad) / (2.0 * np.pi * xs * (model.y1 + model.y2 * xs))
    out = np.where(inside, dens, 0.0)
    return float(out) if np.isscalar(x) else out


def _check_outside_support(lam: float, model: SpectralModel) -> None:
    if abs(lam) < 1e-300:
        raise DomainError("evaluation point must be nonzero")
    if model.is_unit_atom:
        sup = wachter_support(model)
        if sup.contains(lam):
            raise SpikeInsideBulkError(
                f"lambda={lam} lies inside the bulk support "
                f"[{sup.a:.6g}, {sup.b:.6g}] (margin {sup.margin():.3g})"
            )


def _quadrature_m_m2(lam: float, model: SpectralModel) -> tuple[float, float]:
    # Substitute x = mid + half*sin(t): the edge factor sqrt((b-x)(x-a))
    # becomes half*cos(t) and cancels the Jacobian's singularity, leaving a
    # smooth integrand on [-pi/2, pi/2].
    sup = wachter_support(model)
    mid, half = 0.5 * (sup.a + sup.b), 0.5 * (sup.b - sup.a)
    y1, y2 = model.y1, model.y2
    pref = (1.0 - y2) / (2.0 * np.pi)

    def weight(t):
        x = mid + half * np.sin(t)
        return x, pref * (half * np.cos(t)) ** 2 / (x * (y1 + y2 * x))

    def f_m(t):
        x, w = weight(t)
        return w / (x - lam)

    def f_m2(t):
        x, w = weight(t)
        return w / (lam - x) ** 2

    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    m, _ = integrate.quad(f_m, -np.pi / 2, np.pi / 2, **opts)
    m2, _ = integrate.quad(f_m2, -np.pi / 2, np.pi / 2, **opts)
    if y1 > 1.0:
        # more variables than first-sample observations: the bulk LSD carries
        # an atom at zero with mass 1 - 1/y1 on top of the continuous part
        mass0 = 1.0 - 1.0 / y1
        m += mass0 / (0.0 - lam)
        m2 += mass0 / lam**2
    return m, m2


def _base_eigenvalues(model: SpectralModel, dim: int) -> np.ndarray:
    """Replicate the atoms into a length-dim eigenvalue array (largest
    remainder apportionment of the weights)."""
    ws = model.weights
    ts = model.locations
    raw = ws * dim
    counts = np.floor(raw).astype(int)
    rem = dim - counts.sum()
    if rem > 0:
        order = np.argsort(-(raw - counts))
        counts[order[:rem]] += 1
    return np.repeat(ts, counts)


def _montecarlo_m_m2(
    lam: float, model: SpectralModel, dim: int, reps: int, seed: int
) -> tuple[float, float]:
    if reps < 2:
        raise ConfigError("montecarlo backend needs at least 2 replicates")
    # y1 > 1 is legitimate (S1 singular, atom at zero); S2 must stay invertible
    n1 = max(1, round(dim / model.y1))
    n2 = max(dim + 1, round(dim / model.y2))
    base = _base_eigenvalues(model, dim)
    sqrt_base = np.sqrt(base)
    ms, m2s = [], []
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))
        x = rng.standard_normal((dim, n1))
        y = rng.standard_normal((dim, n2))
        s1 = (sqrt_base[:, None] * x) @ (sqrt_base[:, None] * x).T / n1
        s2 = y @ y.T / n2
        w = eigh(s1, s2, eigvals_only=True)
        # rank deficiency (y1 > 1) yields an exact-zero cluster: that is the
        # atom of the LSD, not the bulk; guard against the nonzero bulk and
        # against sitting on the atom itself
        bulk = w[w > 1e-10 * max(w[-1], 1.0)]
        guard = _EDGE_MARGIN * (bulk[-1] - bulk[0])
        if bulk[0] - guard <= lam <= bulk[-1] + guard:
            raise SpikeInsideBulkError(
                f"lambda={lam} falls inside the simulated spectrum "
                f"[{bulk[0]:.6g}, {bulk[-1]:.6g}] at replicate {r}"
            )
        if len(bulk) < len(w) and abs(lam) <= guard:
            raise SpikeInsideBulkError(
                f"lambda={lam} coincides with the atom at zero (replicate {r})"
            )
        ms.append(np.mean(1.0 / (w - lam)))
        m2s.append(np.mean(1.0 / (lam - w) ** 2))
    return float(np.mean(ms)), float(np.mean(m2s))


def stieltjes(
    lam: float,
    model: SpectralModel,
    backend: str = "quadrature",
    *,
    dim: int = 2000,
    reps: int = 20,
    seed: int = 0,
) -> StieltjesBundle:
    """Evaluate the transform bundle at a real point outside the bulk.

    backend="quadrature" integrates the closed-form Wachter density (unit-atom
    base spectrum only).  backend="montecarlo" averages trace resolvents
    (1/dim) tr (F - lam I)^{-1} and (1/dim) tr (F - lam I)^{-2} over `reps`
    independent non-spiked Fisher matrices of dimension `dim` whose population
    spectrum replicates the model atoms.
    """
    lam = float(lam)
    _check_outside_support(lam, model)
    if backend == "quadrature":
        if not model.is_unit_atom:
            raise UnsupportedModelError(
                "quadrature backend requires the unit-atom base spectrum"
            )
        m, m2 = _quadrature_m_m2(lam, model)
    elif backend == "montecarlo":
        m, m2 = _montecarlo_m_m2(lam, model, dim, reps, seed)
    else:
        raise ConfigError(f"unknown stieltjes backend {backend!r}")
    return StieltjesBundle.from_transforms(lam, m, m2, model.y1)
