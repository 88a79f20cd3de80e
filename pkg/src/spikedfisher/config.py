"""Configuration documents: INI-style sections parsed into ModelConfig.

Schema (see README for a complete example):

    [model]       p, n1, n2
    [spikes]      values = 20, 0.2, 0.1   multiplicities = 1, 2, 1
    [sigma]       case = case1 | case2    rho = 0.5 (case2 only)
    [dist]        x, y in {gaussian, rademacher, heavy_tail4}
    [truncation]  exponent = 0.125  scale = 1.0   (optional)
    [mc]          reps, seed
    [regime]      kind = assumptionD | diagonalBlock   (optional)

Every output document records the fingerprint of the effective configuration
(after command-line overrides) so a run can be reproduced exactly.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

from .errors import ConfigError
from .phase import SpikeSpec
from .simulate import ModelConfig, SampleDistribution, TruncationPolicy

__all__ = ["FullConfig", "load_config", "fingerprint"]

_DIST_ALIASES = {
    "gaussian": "gaussian",
    "normal": "gaussian",
    "rademacher": "rademacher",
    "binomial": "rademacher",
    "heavy_tail4": "heavy_tail4",
    "heavytail4": "heavy_tail4",
}

_REGIMES = ("assumptionD", "diagonalBlock")


@dataclass(frozen=True)
class FullConfig:
    model: ModelConfig
    regime: str
    fingerprint: str


def _canonical_items(model: ModelConfig, regime: str) -> list[tuple[str, str]]:
    items = [
        ("model.p", str(model.p)),
        ("model.n1", str(model.n1)),
        ("model.n2", str(model.n2)),
        ("spikes.values", ",".join(repr(a) for a, _ in model.spikes.groups)),
        ("spikes.multiplicities", ",".join(str(m) for _, m in model.spikes.groups)),
        ("sigma.case", model.sigma_case),
        ("sigma.rho", repr(model.rho) if model.rho is not None else "none"),
        ("dist.x", model.dist_x.kind),
        ("dist.y", model.dist_y.kind),
        ("truncation.exponent", repr(model.truncation.eta_exponent)),
        ("truncation.scale", repr(model.truncation.eta_scale)),
        ("mc.reps", str(model.reps)),
        ("mc.seed", str(model.seed)),
        ("regime.kind", regime),
    ]
    return items


def fingerprint(model: ModelConfig, regime: str) -> str:
    text = "\n".join(f"{k}={v}" for k, v in _canonical_items(model, regime))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _require(parser: configparser.ConfigParser, section: str, key: str) -> str:
    if not parser.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    if not parser.has_option(section, key):
        raise ConfigError(f"missing key {key!r} in section [{section}]")
    return parser.get(section, key)


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse float list from {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list from {text!r}") from exc


def _dist(parser, key: str) -> SampleDistribution:
    raw = _require(parser, "dist", key).strip().lower()
    if raw not in _DIST_ALIASES:
        raise ConfigError(f"unknown distribution {raw!r} for dist.{key}")
    return SampleDistribution(_DIST_ALIASES[raw])


def load_config(
    path: str,
    *,
    seed_override: int | None = None,
    reps_override: int | None = None,
) -> FullConfig:
    """Parse a configuration file, apply overrides, compute the fingerprint."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"cannot read configuration file {path!r}")

    p = int(_require(parser, "model", "p"))
    n1 = int(_require(parser, "model", "n1"))
    n2 = int(_require(parser, "model", "n2"))

    values = _floats(_require(parser, "spikes", "values"))
    mults = _ints(_require(parser, "spikes", "multiplicities"))
    if len(values) != len(mults):
        raise ConfigError("spikes.values and spikes.multiplicities differ in length")
    spikes = SpikeSpec(tuple(zip(values, mults)))

    case = _require(parser, "sigma", "case").strip().lower()
    rho = None
    if parser.has_option("sigma", "rho") and parser.get("sigma", "rho").strip():
        rho = float(parser.get("sigma", "rho"))

    dist_x = _dist(parser, "x")
    dist_y = _dist(parser, "y")

    trunc = TruncationPolicy()
    if parser.has_section("truncation"):
        trunc = TruncationPolicy(
            eta_exponent=parser.getfloat("truncation", "exponent", fallback=0.125),
            eta_scale=parser.getfloat("truncation", "scale", fallback=1.0),
        )

    reps = int(_require(parser, "mc", "reps"))
    seed = int(_require(parser, "mc", "seed"))
    if seed_override is not None:
        seed = int(seed_override)
    if reps_override is not None:
        reps = int(reps_override)

    regime = "assumptionD"
    if parser.has_section("regime"):
        regime = parser.get("regime", "kind", fallback="assumptionD").strip()
    if regime not in _REGIMES:
        raise ConfigError(f"regime.kind must be one of {_REGIMES}, got {regime!r}")

    model = ModelConfig(
        p=p,
        n1=n1,
        n2=n2,
        sigma_case=case,
        spikes=spikes,
        dist_x=dist_x,
        dist_y=dist_y,
        truncation=trunc,
        rho=rho,
        reps=reps,
        seed=seed,
    )
    return FullConfig(model=model, regime=regime, fingerprint=fingerprint(model, regime))
