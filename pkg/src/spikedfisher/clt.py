"""Limiting-law parameters for the normalized spiked-eigenvalue fluctuations.

For a distant spike alpha with multiplicity m_k, the vector

    gamma_kj = sqrt(p - M) (l_j / psi_n(alpha) - 1),   j in J_k,

converges to the ordered eigenvalues of -(1/kappa) G, where G is an m_k x m_k
symmetric Gaussian matrix with independent entries of variance var_off above
the diagonal and var_diag on it.  The scalar coefficients are evaluated from
a Stieltjes-transform bundle at the spike's phase point:

    kappa = 1 + c2 s^2 m2 + 2 c2 s m + alpha s m_under2 + alpha m_under
    theta = c2 + c2^2 s^2 m2 + 2 c2^2 s m + c1 alpha^2 m_under2
            + 2 c1 c2 alpha m3

with s the bundle's evaluation point.  var_off = theta always.  With
delocalized spiked eigenvectors (the default regime) var_diag = 2 theta, the
GOE structure.  When the population ratio matrix is diagonal the fourth
moments of the samples enter through

    nu1 = c1 alpha^2 / (s (1 + c1 m))^2,    nu2 = c2 (1 + c2 s m)^2,

and var_diag = 2 theta + beta_x nu1 + beta_y nu2.

The bundle is evaluated at the model-consistent phase point (the point where
the spike equation s + c2 s^2 m(s) + s m_under(s) alpha = 0 holds exactly for
the model's own ratios), while the centering psi_n keeps the p/n ratios; the
two coincide when the model ratios equal p/n_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateError,
    DomainError,
    MismatchError,
    UnsupportedSpikeError,
)
from .lsd import SpectralModel, StieltjesBundle, stieltjes
from .phase import PhaseResult, SpikeSpec, classify, psi_n

__all__ = [
    "MomentProfile",
    "CltLaw",
    "kappa_s",
    "theta_k",
    "nu_coefficients",
    "limit_law",
    "sample_limit",
    "build_laws",
]

REGIMES = ("assumptionD", "diagonalBlock")


@dataclass(frozen=True)
class MomentProfile:
    """Fourth-moment information for one sample array.

    fourth_moment is E|x|^4 of the standardized entries (math.inf allowed);
    beta is the excess-kurtosis correction entering the diagonal-ratio regime
    (E|x|^4 - 3 when the population ratio matrix is diagonal, 0 when
    delocalized eigenvectors wash the correction out).
    """

    fourth_moment: float
    beta: float
    column_fourth_power_sums: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (self.fourth_moment >= 1.0):
            raise DomainError("standardized fourth moment must be >= 1")
        if not np.isfinite(self.beta):
            raise DomainError("beta must be finite")
        if math.isinf(self.fourth_moment) and self.beta != 0.0:
            raise DomainError("infinite fourth moment requires beta = 0")

    @classmethod
    def gaussian(cls) -> "MomentProfile":
        return cls(fourth_moment=3.0, beta=0.0)

    @classmethod
    def rademacher(cls) -> "MomentProfile":
        return cls(fourth_moment=1.0, beta=-2.0)

    @classmethod
    def heavy_tail(cls) -> "MomentProfile":
        return cls(fourth_moment=math.inf, beta=0.0)

    @classmethod
    def for_kind(cls, kind: str) -> "MomentProfile":
        table = {
            "gaussian": cls.gaussian,
            "rademacher": cls.rademacher,
            "heavy_tail4": cls.heavy_tail,
        }
        if kind not in table:
            raise DomainError(f"unknown sample distribution kind {kind!r}")
        return table[kind]()


@dataclass(frozen=True)
class CltLaw:
    """Per-spike limit parameters of the gamma fluctuation vector."""

    alpha: float
    psi_n: float
    kappa: float
    theta: float
    nu1: float
    nu2: float
    var_diag: float
    var_off: float
    mult: int
    scale_dim: int

    def __post_init__(self):
        if self.kappa == 0.0 or not np.isfinite(self.kappa):
            raise DegenerateError("kappa must be nonzero and finite")
        if not (self.var_off > 0) or abs(self.var_off - self.theta) > 1e-12 * max(
            1.0, abs(self.theta)
        ):
            raise DomainError("var_off must equal theta and be positive")
        if not (self.var_diag > 0):
            raise DegenerateError("var_diag must be positive")
        if self.mult < 1 or self.scale_dim < 1:
            raise DomainError("mult and scale_dim must be positive")

    @property
    def sigma2(self) -> float:
        """Variance of the scalar limit for a multiplicity-1 spike."""
        return self.var_diag / self.kappa**2

    @property
    def sigma2_off(self) -> float:
        """Off-diagonal variance on the gamma scale (1/kappa^2 applied)."""
        return self.var_off / self.kappa**2


def _check_bundle_point(bundle: StieltjesBundle, psi: float) -> None:
    if abs(bundle.lam - psi) > 1e-9 * max(1.0, abs(psi)):
        raise MismatchError(
            f"bundle evaluated at {bundle.lam}, expected {psi}"
        )


def kappa_s(alpha: float, psi: float, bundle: StieltjesBundle, c2: float) -> float:
    """Normalization coefficient kappa of the limiting eigenvalue equation."""
    _check_bundle_point(bundle, psi)
    return (
        1.0
        + c2 * psi**2 * bundle.m2
        + 2.0 * c2 * psi * bundle.m
        + alpha * psi * bundle.m_under2
        + alpha * bundle.m_under
    )


def theta_k(
    alpha: float, psi: float, bundle: StieltjesBundle, c1: float, c2: float
) -> float:
    """Base variance theta of the fluctuation matrix entries."""
    _check_bundle_point(bundle, psi)
    return (
        c2
        + c2**2 * psi**2 * bundle.m2
        + 2.0 * c2**2 * psi * bundle.m
        + c1 * alpha**2 * bundle.m_under2
        + 2.0 * c1 * c2 * alpha * bundle.m3
    )


def nu_coefficients(
    alpha: float, psi: float, bundle: StieltjesBundle, c1: float, c2: float
) -> tuple[float, float]:
    """Fourth-moment correction coefficients (nu1, nu2) of the diagonal-ratio
    regime."""
    _check_bundle_point(bundle, psi)
    den = 1.0 + c1 * bundle.m
    if abs(den) < 1e-12:
        raise DegenerateError("1 + c1*m vanishes; nu1 is undefined here")
    nu1 = c1 * alpha**2 / (psi * den) ** 2
    nu2 = c2 * (1.0 + c2 * psi * bundle.m) ** 2
    return nu1, nu2


def limit_law(
    phase: PhaseResult,
    bundle: StieltjesBundle,
    profile_x: MomentProfile,
    profile_y: MomentProfile,
    regime: str,
    c1: float,
    c2: float,
    *,
    mult: int = 1,
    scale_dim: int = 1,
) -> CltLaw:
    """Assemble the limit law of one distant spike group.

    regime="assumptionD" applies the GOE structure var_diag = 2 theta;
    regime="diagonalBlock" adds the beta corrections of the diagonal-ratio
    case (requires finite fourth moments).  The two coincide whenever both
    betas vanish.
    """
    if not phase.distant:
        raise UnsupportedSpikeError(
            f"no limiting law for non-distant spike alpha={phase.alpha}"
        )
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}, got {regime!r}")
    psi = bundle.lam
    kap = kappa_s(phase.alpha, psi, bundle, c2)
    th = theta_k(phase.alpha, psi, bundle, c1, c2)
    nu1, nu2 = nu_coefficients(phase.alpha, psi, bundle, c1, c2)
    if regime == "diagonalBlock":
        if math.isinf(profile_x.fourth_moment) or math.isinf(profile_y.fourth_moment):
            raise DomainError(
                "diagonalBlock regime requires finite fourth moments"
            )
        var_diag = 2.0 * th + profile_x.beta * nu1 + profile_y.beta * nu2
    else:
        var_diag = 2.0 * th
    return CltLaw(
        alpha=phase.alpha,
        psi_n=phase.psi_n,
        kappa=kap,
        theta=th,
        nu1=nu1,
        nu2=nu2,
        var_diag=var_diag,
        var_off=th,
        mult=mult,
        scale_dim=scale_dim,
    )


def sample_limit(law: CltLaw, count: int, seed) -> np.ndarray:
    """Draw sorted eigenvalue vectors of the limiting random matrix.

    Returns an array of shape (count, mult); each row holds the descending
    eigenvalues of -(1/kappa) G with G symmetric Gaussian (variance var_diag
    on the diagonal, var_off above).  Deterministic for a fixed seed.
    """
    if count <= 0:
        raise DomainError("count must be positive")
    rng = np.random.default_rng(seed)
    m = law.mult
    if m == 1:
        draws = rng.normal(0.0, math.sqrt(law.var_diag), size=(count, 1))
        return -draws / law.kappa
    mats = np.zeros((count, m, m))
    iu = np.triu_indices(m, k=1)
    off = rng.normal(0.0, math.sqrt(law.var_off), size=(count, len(iu[0])))
    mats[:, iu[0], iu[1]] = off
    mats += np.transpose(mats, (0, 2, 1))
    diag = rng.normal(0.0, math.sqrt(law.var_diag), size=(count, m))
    mats[:, np.arange(m), np.arange(m)] = diag
    eig = np.linalg.eigvalsh(mats)
    scaled = -eig / law.kappa
    scaled.sort(axis=1)
    return scaled[:, ::-1]


def build_laws(
    spec: SpikeSpec,
    model: SpectralModel,
    p: int,
    n1: int,
    n2: int,
    regime: str = "assumptionD",
    profile_x: MomentProfile | None = None,
    profile_y: MomentProfile | None = None,
    backend: str = "quadrature",
    *,
    mc_dim: int = 2000,
    mc_reps: int = 20,
    mc_seed: int = 0,
) -> list[tuple[PhaseResult, CltLaw | None]]:
    """Classify all spike groups and attach limit laws to the distant ones.

    Centers use the ratios c_{n,i} = p/n_i.  The transform bundle of each
    distant spike is evaluated at the model-consistent phase point (the
    model's own ratios), where the spike equation holds exactly; coefficient
    ratios in kappa/theta/nu stay at p/n_i.  Non-distant groups get law None.
    """
    profile_x = profile_x or MomentProfile.gaussian()
    profile_y = profile_y or MomentProfile.gaussian()
    cn1, cn2 = p / n1, p / n2
    scale_dim = p - spec.M
    results = classify(spec, model, cn1, cn2)
    out = []
    for (alpha, mult), phase in zip(spec.groups, results):
        if not phase.distant:
            out.append((phase, None))
            continue
        lam_star = psi_n(alpha, model, model.y1, model.y2)
        bundle = stieltjes(
            lam_star, model, backend, dim=mc_dim, reps=mc_reps, seed=mc_seed
        )
        law = limit_law(
            phase,
            bundle,
            profile_x,
            profile_y,
            regime,
            cn1,
            cn2,
            mult=mult,
            scale_dim=scale_dim,
        )
        out.append((phase, law))
    return out
