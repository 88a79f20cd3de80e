"""Phase-transition map for spiked eigenvalues and the distant-spike test.

For a population spike alpha the map

    psi_n(alpha) = alpha (1 - c1 * sum_i w_i t_i/(t_i - alpha))
                   / (1 + c2 * sum_i w_i alpha/(t_i - alpha))

carries the spike to the almost-sure location of its sample eigenvalues.  A
spike is *distant* when psi'(alpha) > 0; its sample eigenvalues then detach
from the bulk and fluctuate around psi_n(alpha).  A non-distant spike is
absorbed: its limit is psi evaluated at the nearest critical point of psi on
the side of alpha where psi stays decreasing, which this module locates by a
bracketed root search on the analytic derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassificationError, DomainError, PoleError
from .lsd import SpectralModel

__all__ = ["SpikeSpec", "PhaseResult", "psi_n", "psi_prime", "classify"]

_POLE_TOL = 1e-12
_ATOM_TOL = 1e-12
_PSI_PRIME_TOL = 1e-10


@dataclass(frozen=True)
class SpikeSpec:
    """Population spikes with multiplicities, kept in descending order.

    groups: sequence of (alpha_k, mult_k).  Alphas must be positive and
    pairwise distinct; multiplicities positive integers.  M is the total
    multiplicity, fixed and small relative to the dimension.
    """

    groups: tuple[tuple[float, int], ...]

    def __post_init__(self):
        cleaned = []
        for alpha, mult in self.groups:
            alpha = float(alpha)
            if alpha <= 0:
                raise DomainError(f"spike values must be positive, got {alpha}")
            if int(mult) != mult or mult < 1:
                raise DomainError(f"multiplicity must be a positive integer, got {mult}")
            cleaned.append((alpha, int(mult)))
        alphas = [a for a, _ in cleaned]
        if len(set(alphas)) != len(alphas):
            raise DomainError("spike values must be pairwise distinct")
        cleaned.sort(key=lambda g: -g[0])
        object.__setattr__(self, "groups", tuple(cleaned))

    @property
    def M(self) -> int:
        return sum(m for _, m in self.groups)

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(a for a, _ in self.groups)

    def rank_sets(self, p: int, model: SpectralModel) -> list[range]:
        """0-based ranks J_k of each spike group in the descending population
        spectrum of dimension p (spikes plus base atoms apportioned by
        weight).  Each group's ranks are consecutive."""
        if p <= self.M:
            raise DomainError(f"dimension p={p} must exceed total multiplicity M={self.M}")
        for alpha, _ in self.groups:
            for t in model.locations:
                if abs(alpha - t) <= _ATOM_TOL * max(1.0, abs(t)):
                    raise DomainError(f"spike {alpha} coincides with a base atom")
        base_counts = np.floor(model.weights * (p - self.M)).astype(int)
        rem = (p - self.M) - base_counts.sum()
        if rem > 0:
            order = np.argsort(-(model.weights * (p - self.M) - base_counts))
            base_counts[order[:rem]] += 1
        values, tags = [], []
        for k, (alpha, mult) in enumerate(self.groups):
            values.extend([alpha] * mult)
            tags.extend([k] * mult)
        for t, c in zip(model.locations, base_counts):
            values.extend([t] * int(c))
            tags.extend([-1] * int(c))
        order = np.argsort(-np.asarray(values), kind="stable")
        sorted_tags = np.asarray(tags)[order]
        sets = []
        for k, (_, mult) in enumerate(self.groups):
            pos = np.flatnonzero(sorted_tags == k)
            if len(pos) != mult or pos[-1] - pos[0] != mult - 1:
                raise ClassificationError(
                    f"rank set of group {k} is not consecutive", {"positions": pos.tolist()}
                )
            sets.append(range(int(pos[0]), int(pos[-1]) + 1))
        return sets


@dataclass(frozen=True)
class PhaseResult:
    """Phase classification of one spike group."""

    alpha: float
    psi_n: float
    psi_prime: float
    distant: bool
    rho: float

    def __post_init__(self):
        if self.distant != (self.psi_prime > 0):
            raise DomainError("distant flag must equal psi_prime > 0")
        if self.distant and abs(self.rho - self.psi_n) > 1e-12 * max(1.0, abs(self.psi_n)):
            raise DomainError("distant spikes must have rho = psi_n")
        if not np.isfinite(self.rho) or self.rho <= 0:
            raise DomainError("rho must be finite and positive")


def _h_sums(alpha: float, model: SpectralModel) -> tuple[float, float, float]:
    """Return (s1, s2, s_d): the two base-spectrum sums in psi and their
    common derivative sum_i w_i t_i/(t_i-alpha)^2."""
    ts, ws = model.locations, model.weights
    gaps = ts - alpha
    if np.any(np.abs(gaps) <= _ATOM_TOL * np.maximum(1.0, np.abs(ts))):
        raise DomainError(f"alpha={alpha} coincides with a base atom")
    s1 = float(np.sum(ws * ts / gaps))
    s2 = float(np.sum(ws * alpha / gaps))
    s_d = float(np.sum(ws * ts / gaps**2))
    return s1, s2, s_d


def psi_n(alpha: float, model: SpectralModel, c_n1: float, c_n2: float) -> float:
    """Finite-n phase map at spike alpha."""
    s1, s2, _ = _h_sums(alpha, model)
    den = 1.0 + c_n2 * s2
    if abs(den) < _POLE_TOL:
        raise PoleError(f"phase map denominator vanishes at alpha={alpha}")
    return alpha * (1.0 - c_n1 * s1) / den


def psi_prime(alpha: float, model: SpectralModel, c_n1: float, c_n2: float) -> float:
    """Analytic derivative of psi_n in alpha.

    With s1 = sum w t/(t-a) and s2 = sum w a/(t-a), both derivatives reduce to
    s_d = sum w t/(t-a)^2, so psi' is exact up to rounding; no step size is
    involved in the distant/non-distant decision.
    """
    s1, s2, s_d = _h_sums(alpha, model)
    den = 1.0 + c_n2 * s2
    if abs(den) < _POLE_TOL:
        raise PoleError(f"phase map denominator vanishes at alpha={alpha}")
    num = alpha * (1.0 - c_n1 * s1)
    num_d = 1.0 - c_n1 * (s1 + alpha * s_d)
    den_d = c_n2 * s_d
    return (num_d * den - num * den_d) / den**2


def _search_interval(alpha: float, model: SpectralModel, upward: bool) -> tuple[float, float]:
    ts = model.locations
    if upward:
        above = ts[ts > alpha]
        hi = (alpha + (above.min() - alpha) * (1.0 - 1e-9)) if above.size else alpha * 1e6
        return alpha, hi
    below = ts[ts < alpha]
    lo = (alpha - (alpha - below.max()) * (1.0 - 1e-9)) if below.size else alpha * 1e-6
    return lo, alpha


def _bracket_and_bisect(
    f, lo: float, hi: float, n_grid: int = 400
) -> float | None:
    """Scan f on a log-spaced grid over [lo, hi]; on the first sign change
    bisect to |f| below tolerance.  Returns None when no bracket exists."""
    grid = np.geomspace(lo, hi, n_grid)
    vals = np.empty(n_grid)
    for i, g in enumerate(grid):
        try:
            vals[i] = f(g)
        except (PoleError, DomainError):
            vals[i] = np.nan
    ok = np.isfinite(vals)
    idx = np.flatnonzero(ok)
    for j in range(len(idx) - 1):
        i0, i1 = idx[j], idx[j + 1]
        if vals[i0] == 0.0:
            return float(grid[i0])
        if vals[i0] * vals[i1] < 0:
            a, b = float(grid[i0]), float(grid[i1])
            fa = vals[i0]
            for _ in range(200):
                mid = 0.5 * (a + b)
                fm = f(mid)
                if abs(fm) < _PSI_PRIME_TOL or (b - a) < 1e-15 * max(1.0, abs(mid)):
                    return mid
                if fa * fm < 0:
                    b = mid
                else:
                    a, fa = mid, fm
            return 0.5 * (a + b)
    return None


def classify(
    spec: SpikeSpec, model: SpectralModel, c_n1: float, c_n2: float
) -> list[PhaseResult]:
    """Classify every spike group as distant or absorbed and compute its
    almost-sure limit rho.

    Distant (psi' > 0): rho = psi_n(alpha).  Otherwise rho = psi_n at the
    nearest critical point of psi on the side of alpha where psi' stays
    negative; the search first marches up toward the next base atom (or six
    decades beyond alpha), then down, and raises with diagnostics if neither
    direction brackets a zero of psi'.
    """
    results = []
    for alpha, _ in spec.groups:
        psi = psi_n(alpha, model, c_n1, c_n2)
        dpsi = psi_prime(alpha, model, c_n1, c_n2)
        if dpsi > 0:
            results.append(PhaseResult(alpha, psi, dpsi, True, psi))
            continue
        f = lambda a: psi_prime(a, model, c_n1, c_n2)
        root = None
        tried = {}
        for upward in (True, False):
            lo, hi = _search_interval(alpha, model, upward)
            tried["up" if upward else "down"] = (lo, hi)
            root = _bracket_and_bisect(f, lo, hi)
            if root is not None:
                break
        if root is None:
            raise ClassificationError(
                f"no critical point of psi found near alpha={alpha}",
                {"alpha": alpha, "psi_prime": dpsi, "search_intervals": tried},
            )
        rho = psi_n(root, model, c_n1, c_n2)
        results.append(PhaseResult(alpha, psi, dpsi, False, rho))
    return results
