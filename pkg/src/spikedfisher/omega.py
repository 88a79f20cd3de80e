"""Direct evaluation of the M x M fluctuation matrix on simulated data.

The limiting law of the spiked eigenvalues is driven by a five-term random
matrix Omega_M(lambda, X, Y) built from the singular-vector blocks of the
population ratio matrix.  This module evaluates those five terms exactly as
defined, on concrete samples, so the distributional claims (centering,
entrywise variances, universality across sample distributions) can be
checked empirically instead of trusted.

Notation: [U1 U2] and [V1 V2] are the orthogonal singular-vector blocks, D1
holds the M spiked squared singular values, D2 the non-spiked ones,
Q = V2' S2~ V2, and

    F~  = (1/n1) Q^{-1/2} D2^{1/2} U2' X X' U2 D2^{1/2} Q^{-1/2}
    F~_ = its n1 x n1 companion with the same nonzero spectrum.

Resolvents of the companion are reduced to F~'s via the push-through
identity, so no n1 x n1 matrix is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import eigh
from threadpoolctl import threadpool_limits

from .errors import DomainError, GeometryError, ResolventError
from .simulate import ModelConfig, build_sigma, draw_matrix, truncate_center_scale

__all__ = [
    "SvdParts",
    "OmegaSample",
    "svd_parts",
    "compute_omega",
    "omega_samples",
    "universality_test",
    "UniversalityReport",
]

_ORTHO_TOL = 1e-10
_SUM_TOL = 1e-10
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SvdParts:
    """Singular-vector blocks and singular-value squares of the ratio matrix.

    U1, V1: p x M; U2, V2: p x (p-M); d1 (length M) and d2 (length p-M) are
    the diagonal entries of D1 and D2.
    """

    u1: np.ndarray
    u2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def __post_init__(self):
        for name, block in (("U", np.hstack([self.u1, self.u2])), ("V", np.hstack([self.v1, self.v2]))):
            gram = block.T @ block
            if not np.allclose(gram, np.eye(gram.shape[0]), atol=_ORTHO_TOL):
                raise DomainError(f"[{name}1 {name}2] is not orthogonal to tolerance")
        if np.any(self.d1 <= 0) or np.any(self.d2 <= 0):
            raise DomainError("singular-value squares must be positive")

    @property
    def m_spikes(self) -> int:
        return self.u1.shape[1]


def svd_parts(config: ModelConfig) -> SvdParts:
    """Decompose the configured population ratio matrix into spiked and
    non-spiked singular blocks.

    With Sigma2 = I the ratio matrix is Sigma1^{1/2}, symmetric PSD, so the
    singular vectors are its eigenvectors and the singular-value squares its
    eigenvalues; the M spiked positions are the configured ranks.
    """
    sigma1, _ = build_sigma(config)
    w, v = eigh(sigma1)
    w, v = w[::-1], v[:, ::-1]
    ranks = config.spikes.rank_sets(config.p, config.base_model())
    spiked = np.array([i for rs in ranks for i in rs])
    mask = np.ones(config.p, dtype=bool)
    mask[spiked] = False
    return SvdParts(
        u1=v[:, spiked],
        u2=v[:, mask],
        v1=v[:, spiked],
        v2=v[:, mask],
        d1=w[spiked],
        d2=w[mask],
    )


@dataclass(frozen=True)
class OmegaSample:
    """One evaluation of the fluctuation matrix with its five-term breakdown."""

    lam: float
    omega: np.ndarray
    terms: tuple[np.ndarray, ...]
    asymmetry: float

    def __post_init__(self):
        total = sum(self.terms)
        sym = (total + total.T) / 2.0
        scale = max(1.0, float(np.max(np.abs(self.omega))))
        if not np.allclose(self.omega, sym, atol=_SUM_TOL * scale):
            raise DomainError("omega must equal the symmetrized sum of its five terms")


def compute_omega(
    lam: float,
    parts: SvdParts,
    x: np.ndarray,
    y: np.ndarray,
    n1: int,
    n2: int,
) -> OmegaSample:
    """Evaluate the five fluctuation terms at the point lam.

    Raises ResolventError when lam sits too close to the spectrum of F~ (the
    shifted spectrum's condition number exceeds 1e12).
    """
    p = parts.u1.shape[0]
    m = parts.m_spikes
    sp = math.sqrt(p)
    d1h = np.sqrt(parts.d1)
    d2h = np.sqrt(parts.d2)

    y1 = parts.v1.T @ y                       # M x n2
    y2 = parts.v2.T @ y                       # (p-M) x n2
    q = y2 @ y2.T / n2
    qw, qv = eigh(q)
    if qw[0] <= 0:
        raise ResolventError("Q = V2' S2~ V2 is numerically singular")
    q_ih = (qv / np.sqrt(qw)[None, :]) @ qv.T  # Q^{-1/2}

    x1 = parts.u1.T @ x                       # M x n1
    x2 = parts.u2.T @ x                       # (p-M) x n1
    z2 = q_ih @ (d2h[:, None] * x2)           # Q^{-1/2} D2^{1/2} U2' X
    ft = z2 @ z2.T / n1
    fw, fv = eigh(ft)
    gaps = lam - fw
    if np.min(np.abs(gaps)) == 0 or np.max(np.abs(gaps)) / np.min(np.abs(gaps)) > _COND_LIMIT:
        raise ResolventError(
            f"lambda={lam} is inside or too close to the spectrum of F~ "
            f"[{fw[0]:.6g}, {fw[-1]:.6g}]"
        )
    rt = (fv / gaps[None, :]) @ fv.T           # (lam I - F~)^{-1}
    tr_rt = float(np.sum(1.0 / gaps))

    omega1 = sp * (y1 @ y1.T / n2 - np.eye(m))

    a = (y1 @ y2.T) @ q_ih                     # n2^2 * V1' S2~ V2 Q^{-1/2}
    omega2 = (sp * lam / n2) * tr_rt * np.eye(m) - (sp * lam / n2**2) * (a @ rt @ a.T)

    # Companion resolvent via push-through: for W with n1 rows,
    # (lam I_n1 - F~_)^{-1} W = (W + Z2'(lam I - F~)^{-1} Z2 W / n1) / lam,
    # and tr(lam I_n1 - F~_)^{-1} = (n1 - (p - M))/lam + tr(lam I - F~)^{-1}.
    w1 = x1.T * d1h[None, :]                   # n1 x M = X' U1 D1^{1/2}
    rw = (w1 + z2.T @ (rt @ (z2 @ w1)) / n1) / lam
    tr_under = (n1 - (p - m)) / lam + tr_rt
    omega3 = (sp / n1) * (tr_under * np.diag(parts.d1) - w1.T @ rw)

    xxu1 = (d2h[:, None] * x2) @ w1            # D2^{1/2} U2' X X' U1 D1^{1/2}
    omega4 = (sp / (n1 * n2)) * (a @ rt @ (q_ih @ xxu1))
    omega5 = omega4.T.copy()

    terms = (omega1, omega2, omega3, omega4, omega5)
    raw = sum(terms)
    asym = float(np.max(np.abs(raw - raw.T)))
    omega = (raw + raw.T) / 2.0
    return OmegaSample(lam=lam, omega=omega, terms=terms, asymmetry=asym)


@dataclass(frozen=True)
class UniversalityReport:
    """Entrywise two-sample comparison of omega under two data distributions."""

    lam: float
    reps: int
    level: float
    corrected_level: float
    entries: tuple[dict, ...]
    mean_a: np.ndarray
    mean_b: np.ndarray
    passed: bool


def omega_samples(config: ModelConfig, lam: float, reps: int) -> np.ndarray:
    """Replicated fluctuation matrices at the point lam, shape (reps, M, M).

    Replication r draws fresh samples from the generator derived from
    (config.seed, r) in the probe's own seed namespace.
    """
    return _collect_omegas(config, svd_parts(config), lam, reps)


def _collect_omegas(config: ModelConfig, parts: SvdParts, lam: float, reps: int) -> np.ndarray:
    out = np.empty((reps, parts.m_spikes, parts.m_spikes))
    # small-matrix kernels: one BLAS thread avoids threading overhead
    with threadpool_limits(limits=1):
        for r in range(reps):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=config.seed, spawn_key=(2, r))
            )
            x = draw_matrix(config.dist_x, config.p, config.n1, rng)
            y = draw_matrix(config.dist_y, config.p, config.n2, rng)
            x = truncate_center_scale(x, config.n1, config.truncation, config.dist_x)
            y = truncate_center_scale(y, config.n2, config.truncation, config.dist_y)
            out[r] = compute_omega(lam, parts, x, y, config.n1, config.n2).omega
    return out


def universality_test(
    config_a: ModelConfig,
    config_b: ModelConfig,
    lam: float,
    reps: int,
    level: float = 0.01,
) -> UniversalityReport:
    """Compare the entrywise distributions of omega under two configurations
    that share geometry but may differ in sample distributions.

    Per upper-triangular entry: a two-sample KS test plus the variance ratio.
    The test battery passes when no KS test rejects at `level` after a
    Bonferroni correction over the M(M+1)/2 entries.
    """
    geo_a = (config_a.p, config_a.n1, config_a.n2, config_a.spikes, config_a.sigma_case, config_a.rho)
    geo_b = (config_b.p, config_b.n1, config_b.n2, config_b.spikes, config_b.sigma_case, config_b.rho)
    if geo_a != geo_b:
        raise GeometryError(f"configurations disagree on geometry: {geo_a} vs {geo_b}")
    parts = svd_parts(config_a)
    m = parts.m_spikes
    samples_a = _collect_omegas(config_a, parts, lam, reps)
    samples_b = _collect_omegas(config_b, parts, lam, reps)
    n_entries = m * (m + 1) // 2
    corrected = level / n_entries
    entries = []
    passed = True
    for s in range(m):
        for t in range(s, m):
            ea, eb = samples_a[:, s, t], samples_b[:, s, t]
            res = stats.ks_2samp(ea, eb)
            var_a, var_b = float(np.var(ea, ddof=1)), float(np.var(eb, ddof=1))
            reject = res.pvalue < corrected
            passed &= not reject
            entries.append(
                {
                    "row": s,
                    "col": t,
                    "ks_stat": float(res.statistic),
                    "ks_pvalue": float(res.pvalue),
                    "var_a": var_a,
                    "var_b": var_b,
                    "var_ratio": var_a / var_b if var_b > 0 else math.inf,
                    "reject": bool(reject),
                }
            )
    return UniversalityReport(
        lam=lam,
        reps=reps,
        level=level,
        corrected_level=corrected,
        entries=tuple(entries),
        mean_a=samples_a.mean(axis=0),
        mean_b=samples_b.mean(axis=0),
        passed=passed,
    )
