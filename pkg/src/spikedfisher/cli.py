"""Command-line front end and machine-readable result emission.

Subcommands:

    theory       phase map, distant flags and CLT parameters per spike group
    simulate     Monte Carlo harness; writes gamma samples, summary and
                 plot-ready datasets (QQ, 1-d density, 2-d contour grids)
    omega-probe  entrywise universality comparison of the fluctuation matrix
                 under two configurations sharing geometry
    report       regenerate summary and plot datasets from stored samples

The CLI never draws figures; it emits CSV datasets and key/value summary
documents that reparse to identical values, each stamped with the
configuration fingerprint and seed of the run that produced it.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .clt import CltLaw, MomentProfile, build_laws, sample_limit
from .config import FullConfig, load_config
from .errors import ConfigError, SpikedFisherError
from .lsd import SupportInterval, wachter_support
from .omega import UniversalityReport, universality_test
from .phase import PhaseResult
from .simulate import McReport, run_mc, summarize_groups

__all__ = ["main", "theory_results", "PlotDataset"]


def _fmt(x) -> str:
    """Shortest round-trip decimal form; reparses bit-exactly."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# theory pipeline
# ---------------------------------------------------------------------------


def theory_results(
    fc: FullConfig,
    backend: str = "quadrature",
    *,
    mc_dim: int = 2000,
    mc_reps: int = 20,
) -> tuple[SupportInterval, list[tuple[PhaseResult, CltLaw | None]]]:
    """Bulk edges plus per-group phase classification and limit laws."""
    model = fc.model.base_model()
    support = wachter_support(model)
    pairs = build_laws(
        fc.model.spikes,
        model,
        fc.model.p,
        fc.model.n1,
        fc.model.n2,
        regime=fc.regime,
        profile_x=MomentProfile.for_kind(fc.model.dist_x.kind),
        profile_y=MomentProfile.for_kind(fc.model.dist_y.kind),
        backend=backend,
        mc_dim=mc_dim,
        mc_reps=mc_reps,
        mc_seed=fc.model.seed,
    )
    return support, pairs


def format_theory(fc: FullConfig, support: SupportInterval, pairs, backend: str) -> str:
    out = io.StringIO()
    out.write("[meta]\n")
    out.write(f"fingerprint = {fc.fingerprint}\n")
    out.write(f"backend = {backend}\n")
    out.write(f"regime = {fc.regime}\n")
    out.write("\n[bulk]\n")
    out.write(f"a = {_fmt(support.a)}\n")
    out.write(f"b = {_fmt(support.b)}\n")
    for k, (phase, law) in enumerate(pairs):
        out.write(f"\n[group {k}]\n")
        out.write(f"alpha = {_fmt(phase.alpha)}\n")
        out.write(f"psi_n = {_fmt(phase.psi_n)}\n")
        out.write(f"psi_prime = {_fmt(phase.psi_prime)}\n")
        out.write(f"distant = {str(phase.distant).lower()}\n")
        out.write(f"rho = {_fmt(phase.rho)}\n")
        if law is not None:
            out.write(f"mult = {law.mult}\n")
            out.write(f"scale_dim = {law.scale_dim}\n")
            out.write(f"kappa = {_fmt(law.kappa)}\n")
            out.write(f"theta = {_fmt(law.theta)}\n")
            out.write(f"nu1 = {_fmt(law.nu1)}\n")
            out.write(f"nu2 = {_fmt(law.nu2)}\n")
            out.write(f"var_diag = {_fmt(law.var_diag)}\n")
            out.write(f"var_off = {_fmt(law.var_off)}\n")
            if law.mult == 1:
                out.write(f"sigma2 = {_fmt(law.sigma2)}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# datasets and writers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlotDataset:
    """Named columns of reals plus run metadata, ready for any plotting tool."""

    kind: str
    columns: dict[str, np.ndarray]
    meta: dict[str, str]

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) != 1:
            raise ConfigError("dataset columns must share one length")


def write_dataset(path: Path, ds: PlotDataset) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# kind = {ds.kind}\n")
        for key, val in sorted(ds.meta.items()):
            fh.write(f"# {key} = {val}\n")
        writer = csv.writer(fh)
        names = list(ds.columns)
        writer.writerow(names)
        for row in zip(*(ds.columns[n] for n in names)):
            writer.writerow([_fmt(v) for v in row])


def read_dataset(path: Path) -> PlotDataset:
    meta, kind = {}, "unknown"
    rows = []
    with open(path, newline="") as fh:
        header = None
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                key, val = key.strip(), val.strip()
                if key == "kind":
                    kind = val
                else:
                    meta[key] = val
                continue
            if header is None:
                header = next(csv.reader([line]))
            else:
                rows.append([float(v) for v in next(csv.reader([line]))])
    cols = {
        name: np.array([r[i] for r in rows]) for i, name in enumerate(header or [])
    }
    return PlotDataset(kind=kind, columns=cols, meta=meta)


def write_gamma_csv(path: Path, report: McReport, fingerprint: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# fingerprint = {fingerprint}\n")
        fh.write(f"# seed = {report.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["rep", "group", "index", "value"])
        for k in sorted(report.gamma):
            g = report.gamma[k]
            for row, rep in enumerate(report.rep_indices):
                for j in range(g.shape[1]):
                    writer.writerow([rep, k, j, _fmt(g[row, j])])


def read_gamma_csv(path: Path) -> tuple[dict[str, str], dict[int, np.ndarray], tuple[int, ...]]:
    meta: dict[str, str] = {}
    raw: dict[int, dict[int, dict[int, float]]] = {}
    with open(path, newline="") as fh:
        header = None
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = next(csv.reader([line]))
                continue
            rep_s, group_s, idx_s, val_s = next(csv.reader([line]))
            raw.setdefault(int(group_s), {}).setdefault(int(rep_s), {})[int(idx_s)] = float(val_s)
    reps = sorted({r for g in raw.values() for r in g})
    gamma = {}
    for k, per_rep in sorted(raw.items()):
        mult = len(next(iter(per_rep.values())))
        gamma[k] = np.array([[per_rep[r][j] for j in range(mult)] for r in reps])
    return meta, gamma, tuple(reps)


def write_summary(path: Path, report: McReport, fc: FullConfig) -> None:
    with open(path, "w") as fh:
        fh.write("[meta]\n")
        fh.write(f"fingerprint = {fc.fingerprint}\n")
        fh.write(f"seed = {report.seed}\n")
        fh.write(f"reps = {report.reps}\n")
        fh.write(f"completed = {len(report.rep_indices)}\n")
        fh.write(f"failures = {len(report.failures)}\n")
        if report.bulk_inside_fraction is not None:
            fh.write("\n[bulk]\n")
            fh.write(f"inside_fraction = {_fmt(report.bulk_inside_fraction)}\n")
            fh.write(
                f"spike_separation_fraction = {_fmt(report.spike_separation_fraction)}\n"
            )
        for g in report.groups:
            fh.write(f"\n[group {g.index}]\n")
            fh.write(f"alpha = {_fmt(g.alpha)}\n")
            fh.write(f"mult = {g.mult}\n")
            fh.write(f"psi_n = {_fmt(g.psi_n)}\n")
            fh.write(f"ranks = {','.join(str(r) for r in g.ranks)}\n")
            fh.write(f"sigma2 = {_fmt(g.sigma2)}\n")
            fh.write(f"var_defined = {str(g.var_defined).lower()}\n")
            for j, m in enumerate(g.mean):
                fh.write(f"mean_{j} = {_fmt(m)}\n")
            if g.var is not None:
                for j, v in enumerate(g.var):
                    fh.write(f"var_{j} = {_fmt(v)}\n")
            if g.cov is not None:
                for i, row in enumerate(g.cov):
                    fh.write(f"cov_{i} = {','.join(_fmt(v) for v in row)}\n")
            if g.ks_stat is not None:
                for j, (s, pv) in enumerate(zip(g.ks_stat, g.ks_pvalue)):
                    fh.write(f"ks_stat_{j} = {_fmt(s)}\n")
                    fh.write(f"ks_pvalue_{j} = {_fmt(pv)}\n")


def make_datasets(
    report: McReport, laws: list[CltLaw], fc: FullConfig
) -> dict[str, PlotDataset]:
    """QQ and density datasets per multiplicity-1 group, contour grids per
    larger group (empirical joint density next to the sampled limit law)."""
    meta = {"fingerprint": fc.fingerprint, "seed": str(report.seed)}
    out: dict[str, PlotDataset] = {}
    for g, law in zip(report.groups, laws):
        samples = report.gamma[g.index]
        if samples.shape[0] < 5:
            continue  # density estimates need a handful of replications
        if g.mult == 1:
            vals = np.sort(samples[:, 0])
            n = len(vals)
            sigma = math.sqrt(law.sigma2)
            quant = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n, scale=sigma)
            out[f"qq_group{g.index}"] = PlotDataset(
                "qq", {"theoretical": quant, "empirical": vals}, meta
            )
            span = 4.5 * max(sigma, float(np.std(vals)))
            xs = np.linspace(-span, span, 201)
            emp = stats.gaussian_kde(samples[:, 0])(xs)
            theo = stats.norm.pdf(xs, scale=sigma)
            out[f"density_group{g.index}"] = PlotDataset(
                "density1d",
                {"x": xs, "empirical_density": emp, "theory_density": theo},
                meta,
            )
        else:
            pair = samples[:, :2]
            draws = sample_limit(law, 20_000, seed=(report.seed, 3, g.index))[:, :2]
            lo = min(pair.min(), draws.min())
            hi = max(pair.max(), draws.max())
            axis = np.linspace(lo, hi, 61)
            gx, gy = np.meshgrid(axis, axis, indexing="ij")
            pts = np.vstack([gx.ravel(), gy.ravel()])
            emp = stats.gaussian_kde(pair.T)(pts)
            theo = stats.gaussian_kde(draws.T)(pts)
            out[f"contour_group{g.index}"] = PlotDataset(
                "contour2d",
                {
                    "x": gx.ravel(),
                    "y": gy.ravel(),
                    "empirical_density": emp,
                    "theory_density": theo,
                },
                meta,
            )
    return out


def write_omega_report(out_dir: Path, rep: UniversalityReport, fp_a: str, fp_b: str) -> None:
    with open(out_dir / "omega_report.txt", "w") as fh:
        fh.write("[meta]\n")
        fh.write(f"fingerprint_a = {fp_a}\n")
        fh.write(f"fingerprint_b = {fp_b}\n")
        fh.write(f"lambda = {_fmt(rep.lam)}\n")
        fh.write(f"reps = {rep.reps}\n")
        fh.write(f"level = {_fmt(rep.level)}\n")
        fh.write(f"corrected_level = {_fmt(rep.corrected_level)}\n")
        fh.write(f"verdict = {'pass' if rep.passed else 'fail'}\n")
    with open(out_dir / "omega_entries.csv", "w", newline="") as fh:
        fh.write(f"# fingerprint_a = {fp_a}\n")
        fh.write(f"# fingerprint_b = {fp_b}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["row", "col", "ks_stat", "ks_pvalue", "var_a", "var_b", "var_ratio", "reject"]
        )
        for e in rep.entries:
            writer.writerow(
                [
                    e["row"],
                    e["col"],
                    _fmt(e["ks_stat"]),
                    _fmt(e["ks_pvalue"]),
                    _fmt(e["var_a"]),
                    _fmt(e["var_b"]),
                    _fmt(e["var_ratio"]),
                    str(e["reject"]).lower(),
                ]
            )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_theory(args) -> int:
    fc = load_config(args.config, seed_override=args.seed)
    support, pairs = theory_results(fc, backend=args.backend)
    text = format_theory(fc, support, pairs, args.backend)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "theory.txt").write_text(text)
    return 0


def _laws_for(fc: FullConfig, backend: str = "quadrature") -> list[CltLaw]:
    _, pairs = theory_results(fc, backend=backend)
    laws = [law for _, law in pairs]
    if any(law is None for law in laws):
        missing = [ph.alpha for ph, law in pairs if law is None]
        raise ConfigError(f"non-distant spike groups {missing} have no limit law")
    return laws


def _cmd_simulate(args) -> int:
    fc = load_config(args.config, seed_override=args.seed, reps_override=args.reps)
    laws = _laws_for(fc, backend=args.backend)
    report = run_mc(fc.model, laws, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_gamma_csv(out / "gamma.csv", report, fc.fingerprint)
    write_summary(out / "summary.txt", report, fc)
    for name, ds in make_datasets(report, laws, fc).items():
        write_dataset(out / f"{name}.csv", ds)
    sys.stdout.write(
        f"simulate: {len(report.rep_indices)}/{report.reps} replications, "
        f"{len(report.failures)} failures, outputs in {out}\n"
    )
    return 0


def _cmd_omega_probe(args) -> int:
    fc_a = load_config(args.config_a, seed_override=args.seed_a, reps_override=args.reps)
    fc_b = load_config(args.config_b, seed_override=args.seed_b, reps_override=args.reps)
    _, pairs = theory_results(fc_a)
    lam = args.lam
    if lam is None:
        # default: phase point of the first multiplicity>1 group, else first
        idx = next(
            (k for k, (a, m) in enumerate(fc_a.model.spikes.groups) if m > 1), 0
        )
        lam = pairs[idx][0].psi_n
    reps = args.reps if args.reps is not None else fc_a.model.reps
    rep = universality_test(fc_a.model, fc_b.model, lam, reps, level=args.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_omega_report(out, rep, fc_a.fingerprint, fc_b.fingerprint)
    sys.stdout.write(
        f"omega-probe: lambda={lam:.6g} reps={reps} verdict="
        f"{'pass' if rep.passed else 'fail'}\n"
    )
    return 0


def _cmd_report(args) -> int:
    fc = load_config(args.config)
    laws = _laws_for(fc)
    meta, gamma, reps = read_gamma_csv(Path(args.samples))
    ranks = tuple(
        tuple(rs) for rs in fc.model.spikes.rank_sets(fc.model.p, fc.model.base_model())
    )
    groups = summarize_groups(fc.model.spikes, laws, gamma, ranks, seed=fc.model.seed)
    report = McReport(
        seed=fc.model.seed,
        reps=len(reps),
        rep_indices=reps,
        groups=groups,
        gamma=gamma,
        failures=(),
        bulk_inside_fraction=None,
        spike_separation_fraction=None,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out / "summary.txt", report, fc)
    for name, ds in make_datasets(report, laws, fc).items():
        write_dataset(out / f"{name}.csv", ds)
    sys.stdout.write(f"report: regenerated summary for {len(reps)} replications in {out}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikedfisher",
        description="Spiked Fisher matrix phase transitions, limit laws and Monte Carlo checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theory", help="phase map and CLT parameter table")
    th.add_argument("--config", required=True)
    th.add_argument("--out", default=None)
    th.add_argument("--seed", type=int, default=None)
    th.add_argument("--backend", choices=("quadrature", "montecarlo"), default="quadrature")
    th.set_defaults(func=_cmd_theory)

    sim = sub.add_parser("simulate", help="Monte Carlo harness")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--backend", choices=("quadrature", "montecarlo"), default="quadrature")
    sim.set_defaults(func=_cmd_simulate)

    om = sub.add_parser("omega-probe", help="universality comparison of the fluctuation matrix")
    om.add_argument("--config-a", required=True)
    om.add_argument("--config-b", required=True)
    om.add_argument("--out", required=True)
    om.add_argument("--reps", type=int, default=None)
    om.add_argument("--lam", type=float, default=None)
    om.add_argument("--level", type=float, default=0.01)
    om.add_argument("--seed-a", type=int, default=None)
    om.add_argument("--seed-b", type=int, default=None)
    om.set_defaults(func=_cmd_omega_probe)

    rep = sub.add_parser("report", help="regenerate summary/datasets from stored samples")
    rep.add_argument("--config", required=True)
    rep.add_argument("--samples", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpikedFisherError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
