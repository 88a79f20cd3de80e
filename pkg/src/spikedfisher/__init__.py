"""Spiked Fisher matrices: phase transitions, limiting laws, Monte Carlo checks.

The package computes, for a two-sample Fisher matrix F = S1 S2^{-1} with a
finite number of spiked population eigenvalues:

- the phase-transition map psi_n carrying each spike to the almost-sure
  location of its sample eigenvalues, with the distant/absorbed
  classification (`phase`);
- the Stieltjes transforms of the bulk limiting spectral distribution,
  by closed-form quadrature or trace-resolvent Monte Carlo (`lsd`);
- the parameters of the Gaussian limit law of the normalized fluctuations
  sqrt(p - M)(l/psi_n - 1), including the fourth-moment corrections of the
  diagonal-ratio regime (`clt`);
- a replication harness generating data, truncating entries and collecting
  the fluctuation statistics (`simulate`);
- a direct probe of the M x M fluctuation matrix whose limit drives the
  theory, used to test universality across sample distributions (`omega`).

The command-line entry point is ``spikedfisher`` (see `cli`).
"""

from .clt import (
    CltLaw,
    MomentProfile,
    build_laws,
    kappa_s,
    limit_law,
    nu_coefficients,
    sample_limit,
    theta_k,
)
from .config import FullConfig, fingerprint, load_config
from .errors import SpikedFisherError
from .lsd import (
    SpectralModel,
    StieltjesBundle,
    SupportInterval,
    stieltjes,
    wachter_density,
    wachter_support,
)
from .omega import OmegaSample, SvdParts, compute_omega, svd_parts, universality_test
from .phase import PhaseResult, SpikeSpec, classify, psi_n, psi_prime
from .simulate import (
    EigenSample,
    McReport,
    ModelConfig,
    SampleDistribution,
    TruncationPolicy,
    build_sigma,
    draw_matrix,
    fisher_eigs,
    run_mc,
    truncate_center_scale,
)

__version__ = "0.1.0"

__all__ = [
    "CltLaw",
    "EigenSample",
    "FullConfig",
    "McReport",
    "ModelConfig",
    "MomentProfile",
    "OmegaSample",
    "PhaseResult",
    "SampleDistribution",
    "SpectralModel",
    "SpikeSpec",
    "SpikedFisherError",
    "StieltjesBundle",
    "SupportInterval",
    "SvdParts",
    "TruncationPolicy",
    "build_laws",
    "build_sigma",
    "classify",
    "compute_omega",
    "draw_matrix",
    "fingerprint",
    "fisher_eigs",
    "kappa_s",
    "limit_law",
    "load_config",
    "nu_coefficients",
    "psi_n",
    "psi_prime",
    "run_mc",
    "sample_limit",
    "stieltjes",
    "svd_parts",
    "theta_k",
    "truncate_center_scale",
    "universality_test",
    "wachter_density",
    "wachter_support",
]
