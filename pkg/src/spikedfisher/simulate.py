"""Two-sample data generation and the Monte Carlo replication harness.

Generates X (p x n1) and Y (p x n2) with i.i.d. standardized entries from a
configurable distribution, applies the truncation-centralization step that
the limit theory assumes (entries clipped at eta_n * sqrt(n), re-centered and
re-scaled), forms the spiked Fisher matrix

    F = Sigma1^{1/2} (X X'/n1) Sigma1^{1/2} [Sigma2^{1/2} (Y Y'/n2) Sigma2^{1/2}]^{-1}

via a symmetric-definite eigensolve, and extracts the normalized fluctuation
statistics gamma_kj = sqrt(p - M) (l_j / psi_n(alpha_k) - 1) at the fixed
population ranks of each spike group.

Replications are independent; each derives its generator from the pair
(seed, replication index), so results are identical no matter how the work is
scheduled, and the harness merges them in replication order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import LinAlgError, eigh, toeplitz
from scipy.special import exp1
from threadpoolctl import threadpool_limits

from .clt import CltLaw, sample_limit
from .errors import (
    ConfigError,
    DegenerateTruncationError,
    DomainError,
    HarnessError,
    SingularityError,
)
from .lsd import SpectralModel, wachter_support
from .phase import SpikeSpec

__all__ = [
    "SampleDistribution",
    "TruncationPolicy",
    "ModelConfig",
    "EigenSample",
    "GroupSummary",
    "McReport",
    "build_sigma",
    "draw_matrix",
    "truncate_center_scale",
    "fisher_eigs",
    "run_mc",
    "summarize_groups",
]

DIST_KINDS = ("gaussian", "rademacher", "heavy_tail4")

# Heavy-tail law: P(|X| > tau) = tau^-4 / log(tau) for tau >= e, uniform
# density below e, then standardized to unit variance.  The second moment has
# the closed form 2 (e^2/2 - c0 e^3/3 + E1(2)).
_E = math.e
_HT_SURV_E = math.exp(-4.0)
_HT_C0 = (1.0 - _HT_SURV_E) / _E
_HT_SIGMA = math.sqrt(2.0 * (_E**2 / 2.0 - _HT_C0 * _E**3 / 3.0 + float(exp1(2.0))))


@dataclass(frozen=True)
class SampleDistribution:
    """Entry distribution of a sample array; always mean 0, variance 1."""

    kind: str

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ConfigError(f"distribution kind must be one of {DIST_KINDS}")


@dataclass(frozen=True)
class TruncationPolicy:
    """Truncation level eta_n = eta_scale * n^(-eta_exponent).

    The exponent must lie in (0, 1/2) so eta_n -> 0 while eta_n sqrt(n) -> oo.
    """

    eta_exponent: float = 0.125
    eta_scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.eta_exponent < 0.5):
            raise ConfigError("eta_exponent must lie in (0, 1/2)")
        if not (self.eta_scale > 0):
            raise ConfigError("eta_scale must be positive")

    def threshold(self, n: int) -> float:
        """The clipping level eta_n * sqrt(n) = eta_scale * n^(1/2 - exp)."""
        return self.eta_scale * float(n) ** (0.5 - self.eta_exponent)


@dataclass(frozen=True)
class ModelConfig:
    """Complete description of one simulation scenario."""

    p: int
    n1: int
    n2: int
    sigma_case: str
    spikes: SpikeSpec
    dist_x: SampleDistribution
    dist_y: SampleDistribution
    truncation: TruncationPolicy = TruncationPolicy()
    rho: float | None = None
    reps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.sigma_case not in ("case1", "case2"):
            raise ConfigError("sigma_case must be 'case1' or 'case2'")
        if self.sigma_case == "case2":
            if self.rho is None or not (-1.0 < self.rho < 1.0):
                raise ConfigError("case2 requires rho strictly inside (-1, 1)")
        if self.p <= self.spikes.M:
            raise ConfigError(f"p={self.p} must exceed total multiplicity M={self.spikes.M}")
        if self.n2 <= self.p:
            raise ConfigError(f"n2={self.n2} must exceed p={self.p} so S2 is invertible")
        if self.n1 < 1 or self.reps < 1:
            raise ConfigError("n1 and reps must be positive")

    def base_model(self) -> SpectralModel:
        """Unit-atom spectral model at the (p - M)/n_i ratios."""
        pm = self.p - self.spikes.M
        return SpectralModel.unit(y1=pm / self.n1, y2=pm / self.n2)


@dataclass(frozen=True)
class EigenSample:
    """One replication's descending spectrum plus extracted gamma vectors."""

    all_eigs: np.ndarray
    gamma: dict[int, np.ndarray]

    def __post_init__(self):
        w = np.asarray(self.all_eigs)
        if np.any(np.diff(w) > 0):
            raise DomainError("eigenvalues must be in descending order")
        if np.any(w < -1e-10 * max(1.0, abs(float(w[0])))):
            raise DomainError("Fisher eigenvalues must be nonnegative")


def _population_eigenvalues(config: ModelConfig) -> np.ndarray:
    vals = []
    for alpha, mult in config.spikes.groups:
        vals.extend([alpha] * mult)
    vals.extend([1.0] * (config.p - config.spikes.M))
    return -np.sort(-np.asarray(vals))


def build_sigma(config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Population covariance pair (Sigma1, Sigma2 = I).

    case1: Sigma1 is diagonal with the spikes placed in descending spectral
    order among unit eigenvalues.  case2: the same spectrum conjugated by the
    eigenvector matrix of the Toeplitz correlation matrix (rho^|i-j|).
    """
    lam = _population_eigenvalues(config)
    p = config.p
    if config.sigma_case == "case1":
        sigma1 = np.diag(lam)
    else:
        u0 = _toeplitz_eigenvectors(p, config.rho)
        sigma1 = (u0 * lam[None, :]) @ u0.T
        sigma1 = (sigma1 + sigma1.T) / 2.0
    return sigma1, np.eye(p)


def _toeplitz_eigenvectors(p: int, rho: float) -> np.ndarray:
    if not (-1.0 < rho < 1.0):
        raise ConfigError("|rho| must be strictly less than 1")
    corr = toeplitz(rho ** np.arange(p))
    _, vecs = eigh(corr)
    return vecs


def _heavy_tail_abs_quantile(v: np.ndarray) -> np.ndarray:
    """Quantile of |X| (before standardization) at survival probability v."""
    tau = np.empty_like(v)
    body = v >= _HT_SURV_E
    tau[body] = (1.0 - v[body]) / _HT_C0
    tail = ~body
    if np.any(tail):
        lv = np.log(v[tail])
        # Solve tau^-4 / log(tau) = v in s = log(tau): f(s) = -4s - log s - lv.
        # f is decreasing and convex; starting at max(1, -lv/4) >= root makes
        # Newton monotone.
        s = np.maximum(1.0, -lv / 4.0)
        for _ in range(80):
            f = -4.0 * s - np.log(s) - lv
            step = f / (-4.0 - 1.0 / s)
            s = s - step
            if np.max(np.abs(step)) < 1e-14:
                break
        tau[tail] = np.exp(s)
    return tau


def draw_matrix(
    dist: SampleDistribution, rows: int, cols: int, rng: np.random.Generator
) -> np.ndarray:
    """i.i.d. matrix with standardized entries from the requested law."""
    if dist.kind == "gaussian":
        return rng.standard_normal((rows, cols))
    if dist.kind == "rademacher":
        return rng.integers(0, 2, size=(rows, cols)).astype(float) * 2.0 - 1.0
    # heavy_tail4 by inverse CDF; survival drawn in (0, 1].
    v = 1.0 - rng.random((rows, cols))
    tau = _heavy_tail_abs_quantile(v)
    signs = rng.integers(0, 2, size=(rows, cols)).astype(float) * 2.0 - 1.0
    return signs * tau / _HT_SIGMA


def _gaussian_truncated_sd(threshold: float) -> float:
    # E[X^2 1{|X| < T}] = 1 - 2 (T phi(T) + Q(T)) for standard normal.
    t = threshold
    phi_t = math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    q_t = 0.5 * math.erfc(t / math.sqrt(2.0))
    return math.sqrt(max(0.0, 1.0 - 2.0 * (t * phi_t + q_t)))


def truncate_center_scale(
    x: np.ndarray,
    n: int,
    policy: TruncationPolicy,
    dist: SampleDistribution | None = None,
) -> np.ndarray:
    """Clip entries at eta_n sqrt(n), re-center and re-scale to variance 1.

    When the generating distribution is known with closed-form truncated
    moments (gaussian, rademacher) those exact moments are used, so untruncated
    data passes through essentially unchanged; otherwise the pooled empirical
    moments of the clipped matrix are used.
    """
    if x.shape[1] != n:
        raise ConfigError(f"matrix has {x.shape[1]} columns, expected n={n}")
    t = policy.threshold(n)
    clipped = np.where(np.abs(x) < t, x, 0.0)
    kind = dist.kind if dist is not None else None
    if kind == "gaussian":
        mean, sd = 0.0, _gaussian_truncated_sd(t)
    elif kind == "rademacher":
        mean, sd = 0.0, (1.0 if t > 1.0 else 0.0)
    else:
        mean, sd = float(clipped.mean()), float(clipped.std())
    if sd < 1e-8:
        raise DegenerateTruncationError(
            f"post-truncation standard deviation {sd!r} below tolerance at level {t!r}"
        )
    return (clipped - mean) / sd


def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[None, :]) @ v.T


def _is_identity(a: np.ndarray) -> bool:
    return a.shape[0] == a.shape[1] and np.array_equal(a, np.eye(a.shape[0]))


def fisher_eigs(
    sigma1: np.ndarray,
    sigma2: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    n1: int,
    n2: int,
) -> np.ndarray:
    """Descending eigenvalues of S1 S2^{-1} via the symmetric-definite
    reduction (Cholesky of S2 inside the LAPACK driver), which keeps the
    spectrum real and ordered."""
    half1 = None if _is_identity(sigma1) else _sqrtm_psd(sigma1)
    half2 = None if _is_identity(sigma2) else _sqrtm_psd(sigma2)
    s1 = _sample_cov(x, n1, half1)
    s2 = _sample_cov(y, n2, half2)
    return _generalized_eigs(s1, s2)


def _sample_cov(x: np.ndarray, n: int, half: np.ndarray | None) -> np.ndarray:
    z = x if half is None else half @ x
    return z @ z.T / n


def _generalized_eigs(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    try:
        w = eigh(s1, s2, eigvals_only=True)
    except LinAlgError as exc:
        raise SingularityError(f"S2 numerically singular: {exc}") from exc
    return w[::-1]


@dataclass(frozen=True)
class GroupSummary:
    """Aggregated statistics of one spike group's gamma samples."""

    index: int
    alpha: float
    mult: int
    psi_n: float
    ranks: tuple[int, ...]
    mean: tuple[float, ...]
    var: tuple[float, ...] | None
    cov: tuple[tuple[float, ...], ...] | None
    ks_stat: tuple[float, ...] | None
    ks_pvalue: tuple[float, ...] | None
    sigma2: float
    var_defined: bool


@dataclass(frozen=True)
class McReport:
    """Outcome of a Monte Carlo run: samples, summaries and diagnostics."""

    seed: int
    reps: int
    rep_indices: tuple[int, ...]
    groups: tuple[GroupSummary, ...]
    gamma: dict[int, np.ndarray]
    failures: tuple[tuple[int, str], ...]
    bulk_inside_fraction: float | None
    spike_separation_fraction: float | None


@dataclass(frozen=True)
class _RepContext:
    """Everything one replication needs; shipped to workers once."""

    p: int
    n1: int
    n2: int
    dist_x: SampleDistribution
    dist_y: SampleDistribution
    truncation: TruncationPolicy
    sqrt_diag: np.ndarray | None
    sqrt_dense: np.ndarray | None
    ranks: tuple[tuple[int, ...], ...]
    centers: tuple[float, ...]
    scale: float
    bulk_lo: float
    bulk_hi: float
    edge_lo: float
    edge_hi: float
    above: tuple[bool, ...]
    seed: int


_WORKER_CTX: _RepContext | None = None


def _init_worker(ctx: _RepContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx
    # one BLAS thread per worker: the p x p kernels are too small to gain
    # from threading and the workers already saturate the cores
    threadpool_limits(limits=1)


def _run_rep_worker(r: int):
    try:
        return "ok", _run_rep(_WORKER_CTX, r)
    except Exception as exc:
        return "fail", f"{type(exc).__name__}: {exc}"


def _run_rep(ctx: _RepContext, r: int):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=ctx.seed, spawn_key=(0, r)))
    x = draw_matrix(ctx.dist_x, ctx.p, ctx.n1, rng)
    y = draw_matrix(ctx.dist_y, ctx.p, ctx.n2, rng)
    x = truncate_center_scale(x, ctx.n1, ctx.truncation, ctx.dist_x)
    y = truncate_center_scale(y, ctx.n2, ctx.truncation, ctx.dist_y)
    if ctx.sqrt_diag is not None:
        z = ctx.sqrt_diag[:, None] * x
    else:
        z = ctx.sqrt_dense @ x
    s1 = z @ z.T / ctx.n1
    s2 = y @ y.T / ctx.n2
    w = _generalized_eigs(s1, s2)
    gammas = {}
    spikes_ok = True
    for k, (ranks, center, above) in enumerate(zip(ctx.ranks, ctx.centers, ctx.above)):
        vals = w[list(ranks)]
        gammas[k] = ctx.scale * (vals / center - 1.0)
        if above:
            spikes_ok &= bool(np.all(vals > ctx.bulk_hi))
        else:
            spikes_ok &= bool(np.all(vals < ctx.bulk_lo))
    sample = EigenSample(all_eigs=w, gamma=gammas)
    spiked = [i for ranks in ctx.ranks for i in ranks]
    mask = np.ones(ctx.p, dtype=bool)
    mask[spiked] = False
    rest = w[mask]
    bulk_ok = bool(np.all((rest >= ctx.edge_lo) & (rest <= ctx.edge_hi)))
    return sample, bulk_ok, spikes_ok


def run_mc(
    config: ModelConfig,
    laws: list[CltLaw | None],
    *,
    jobs: int = 1,
    limit_count: int = 100_000,
) -> McReport:
    """Run the replication harness and aggregate gamma statistics.

    `laws` must align with config.spikes.groups and provide a law for every
    group (the centers psi_n are read from them).  Goodness of fit: for
    multiplicity 1 a one-sample KS test against the law's normal marginal;
    for larger groups a two-sample KS per sorted position against draws from
    sample_limit.  Failed replications are recorded and skipped; more than 1%
    failures aborts the run.
    """
    spec = config.spikes
    if len(laws) != len(spec.groups) or any(law is None for law in laws):
        raise ConfigError("run_mc needs one limit law per spike group")
    model = config.base_model()
    ranks = tuple(tuple(rs) for rs in spec.rank_sets(config.p, model))
    sup = wachter_support(model)
    width = sup.b - sup.a
    centers = tuple(law.psi_n for law in laws)
    above = tuple(c > sup.b for c in centers)
    if config.sigma_case == "case1":
        sqrt_diag = np.sqrt(_population_eigenvalues(config))
        sqrt_dense = None
    else:
        sigma1, _ = build_sigma(config)
        sqrt_diag, sqrt_dense = None, _sqrtm_psd(sigma1)
    ctx = _RepContext(
        p=config.p,
        n1=config.n1,
        n2=config.n2,
        dist_x=config.dist_x,
        dist_y=config.dist_y,
        truncation=config.truncation,
        sqrt_diag=sqrt_diag,
        sqrt_dense=sqrt_dense,
        ranks=ranks,
        centers=centers,
        scale=math.sqrt(config.p - spec.M),
        bulk_lo=sup.a,
        bulk_hi=sup.b,
        edge_lo=sup.a - 0.15 * width,
        edge_hi=sup.b + 0.15 * width,
        above=above,
        seed=config.seed,
    )
    results: list = [None] * config.reps
    failures: list[tuple[int, str]] = []
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(ctx,)
        ) as pool:
            for r, (tag, res) in enumerate(
                pool.map(_run_rep_worker, range(config.reps), chunksize=8)
            ):
                if tag == "ok":
                    results[r] = res
                else:
                    failures.append((r, res))
    else:
        with threadpool_limits(limits=1):
            for r in range(config.reps):
                try:
                    results[r] = _run_rep(ctx, r)
                except Exception as exc:  # recorded, run continues
                    failures.append((r, f"{type(exc).__name__}: {exc}"))
    rep_indices = tuple(r for r, res in enumerate(results) if res is not None)
    ok = [results[r] for r in rep_indices]
    if len(failures) > max(0.01 * config.reps, 0):
        raise HarnessError(
            f"{len(failures)} of {config.reps} replications failed: {failures[:5]}"
        )
    gamma = {
        k: np.array([res[0].gamma[k] for res in ok]) for k in range(len(spec.groups))
    }
    bulk_frac = float(np.mean([res[1] for res in ok])) if ok else None
    spike_frac = float(np.mean([res[2] for res in ok])) if ok else None
    groups = summarize_groups(
        spec, laws, gamma, ranks, seed=config.seed, limit_count=limit_count
    )
    return McReport(
        seed=config.seed,
        reps=config.reps,
        rep_indices=rep_indices,
        groups=groups,
        gamma=gamma,
        failures=tuple(failures),
        bulk_inside_fraction=bulk_frac,
        spike_separation_fraction=spike_frac,
    )


def summarize_groups(
    spec: SpikeSpec,
    laws: list[CltLaw | None],
    gamma: dict[int, np.ndarray],
    ranks: tuple[tuple[int, ...], ...],
    *,
    seed: int,
    limit_count: int = 100_000,
) -> tuple[GroupSummary, ...]:
    """Aggregate per-group moments and goodness-of-fit from gamma samples."""
    groups = []
    for k, ((alpha, mult), law) in enumerate(zip(spec.groups, laws)):
        g = gamma[k]
        nrep = g.shape[0]
        var_defined = nrep >= 2
        mean = tuple(float(v) for v in g.mean(axis=0))
        var = tuple(float(v) for v in g.var(axis=0, ddof=1)) if var_defined else None
        cov = None
        if mult > 1 and var_defined:
            cov = tuple(tuple(float(c) for c in row) for row in np.cov(g.T, ddof=1))
        ks_stat = ks_pvalue = None
        if nrep >= 5:
            stats_j, pvals_j = [], []
            if mult == 1:
                res = stats.kstest(g[:, 0], "norm", args=(0.0, math.sqrt(law.sigma2)))
                stats_j, pvals_j = [res.statistic], [res.pvalue]
            else:
                draws = sample_limit(law, limit_count, seed=(seed, 1, k))
                for j in range(mult):
                    res = stats.ks_2samp(g[:, j], draws[:, j])
                    stats_j.append(res.statistic)
                    pvals_j.append(res.pvalue)
            ks_stat = tuple(float(s) for s in stats_j)
            ks_pvalue = tuple(float(v) for v in pvals_j)
        groups.append(
            GroupSummary(
                index=k,
                alpha=alpha,
                mult=mult,
                psi_n=law.psi_n,
                ranks=tuple(ranks[k]),
                mean=mean,
                var=var,
                cov=cov,
                ks_stat=ks_stat,
                ks_pvalue=ks_pvalue,
                sigma2=law.sigma2,
                var_defined=var_defined,
            )
        )
    return tuple(groups)
