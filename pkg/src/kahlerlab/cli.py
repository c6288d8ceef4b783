"""Command-line front end: configuration, dispatch, and report emission.

Every subcommand assembles a RunConfig (config file < flags precedence),
dispatches to the corresponding module, writes a JSON report plus any CSV
series into the output directory, and exits 0 on success, 1 when an asserted
check fails, 2 on usage errors.  Reports carry a SHA-256 hash over their
exact (non-float) fields so reruns with the same config and seed can be
compared bit-for-bit.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import hashlib
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import continuity as cont
from .acceptance import run_battery
from .alpha import alpha_mk_estimate
from .bergman import bergman_approximation, bergman_kernel, eigenvalue_control_probe
from .criterion import as_fraction, check_alpha_criterion, choose_parameters
from .functionals import functional_report
from .geometry import ToricFanoModel
from .potentials import get_potential, library_names

__all__ = ["RunConfig", "main", "build_parser"]

MODELS = {"cp1": 1, "cp2": 2, "cp3": 3}
ENV_OUTDIR = "KAHLERLAB_OUTDIR"


@dataclasses.dataclass
class RunConfig:
    """Validated run parameters; one field per CLI flag."""

    command: str
    model: str = "cp1"
    perturbation: str = "none"
    nodes: int | None = None
    m: int = 1
    k: int = 2
    alpha1: str | None = None
    alphak: str | None = None
    lam: str = "1"
    potential: str = "all"
    dt: float = 0.01
    delta: float = 0.05
    solver_nodes: int | None = None
    rays: int = 200
    probes: int = 10
    budget: int = 400
    profile: str = "full"
    seed: int = 0
    outdir: str = "."

    @property
    def n(self) -> int:
        return MODELS[self.model]

    def validate(self) -> None:
        if self.command not in SUBCOMMANDS:
            raise ValueError(f"unknown command: {self.command}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model: {self.model} (use cp1, cp2 or cp3)")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not 0.0 < self.dt <= 0.5:
            raise ValueError("dt must lie in (0, 0.5]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.profile not in ("quick", "full"):
            raise ValueError("profile must be quick or full")
        if self.perturbation != "none" and self.perturbation not in library_names(self.n):
            raise ValueError(
                f"unknown perturbation: {self.perturbation} "
                f"(library: {', '.join(library_names(self.n))})"
            )
        if self.potential != "all" and self.potential not in library_names(self.n):
            raise ValueError(f"unknown potential: {self.potential}")

    def model_instance(self) -> ToricFanoModel:
        pert = None
        if self.perturbation != "none":
            pert = get_potential(self.n, self.perturbation)
        return ToricFanoModel(self.n, nodes_per_axis=self.nodes, perturbation=pert)


# ---------------------------------------------------------------------------
# report plumbing


def _exact_fields(obj):
    """Strip floats (and anything volatile) so the remainder hashes stably."""
    if isinstance(obj, dict):
        out = {}
        for key, val in sorted(obj.items()):
            # timings and the output location are run-local context, not
            # results; two runs of the same computation must hash equal
            if key in ("timestamp", "seconds", "runtime_n1", "runtime_n2", "outdir"):
                continue
            kept = _exact_fields(val)
            if kept is not _DROP:
                out[str(key)] = kept
        return out
    if isinstance(obj, (list, tuple)):
        kept = [_exact_fields(v) for v in obj]
        return [v for v in kept if v is not _DROP]
    if isinstance(obj, bool) or isinstance(obj, (int, str)) or obj is None:
        return obj
    if isinstance(obj, Fraction):
        return str(obj)
    return _DROP


_DROP = object()


def report_hash(report: dict) -> str:
    canon = json.dumps(_exact_fields(report), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class _JsonEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, Fraction):
            return str(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def _write_report(config: RunConfig, body: dict, passed: bool) -> Path:
    report = {
        "schema": 1,
        "command": config.command,
        "config": dataclasses.asdict(config),
        "provenance": {
            "version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
        "passed": bool(passed),
        **body,
    }
    report["exact_hash"] = report_hash(report)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{config.command}_report.json"
    path.write_text(json.dumps(report, indent=2, cls=_JsonEncoder) + "\n")
    return path


def write_csv(path: Path, header: list[str], rows) -> None:
    """Plottable CSV with a documented header; empty series keep the header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# subcommand implementations (each returns (passed, body, csv description))


def _cmd_identities(config: RunConfig) -> tuple[bool, dict]:
    model = config.model_instance()
    names = library_names(config.n) if config.potential == "all" else [config.potential]
    matrix = {}
    worst = 0.0
    for i, name in enumerate(names):
        phi = get_potential(config.n, name)
        psi = get_potential(config.n, names[i - 1]) if len(names) > 1 and i else None
        rep = functional_report(model, phi, psi)
        matrix[name] = rep.expansion_residuals
        for branch in ("difference_expansion_by_r", "energy_difference_by_k"):
            for v in rep.expansion_residuals[branch].values():
                if isinstance(v, float):
                    worst = max(worst, abs(v))
    tol = 1e-6 if config.n <= 2 else 1e-4
    rows = [
        (name, branch, key, val)
        for name, res in matrix.items()
        for branch in ("difference_expansion_by_r", "energy_difference_by_k")
        for key, val in res[branch].items()
        if isinstance(val, float)
    ]
    write_csv(
        Path(config.outdir) / "identity_residuals.csv",
        ["potential", "identity", "index", "residual"],
        rows,
    )
    return worst <= tol, {"worst_residual": worst, "tolerance": tol, "residuals": matrix}


def _cmd_functionals(config: RunConfig) -> tuple[bool, dict]:
    model = config.model_instance()
    names = library_names(config.n) if config.potential == "all" else [config.potential]
    reports = {}
    ok = True
    rows = []
    for name in names:
        rep = functional_report(model, get_potential(config.n, name))
        reports[name] = rep.to_dict()
        ok &= rep.i_minus_j >= -1e-9 and rep.dominance >= -1e-9
        for k in sorted(rep.ik_difference):
            rows.append((name, k, rep.ik_difference[k], rep.ik_sum[k], rep.ik_route_residual[k]))
    write_csv(
        Path(config.outdir) / "functionals_Ik.csv",
        ["potential", "k", "I_k_difference", "I_k_sum", "route_residual"],
        rows,
    )
    return ok, {"reports": reports}


def _cmd_bergman(config: RunConfig) -> tuple[bool, dict]:
    model = config.model_instance()
    kern = bergman_kernel(model, config.m)
    norm = kern.normalization_integral()
    dim = kern.basis.size
    body: dict = {
        "m": config.m,
        "dim": dim,
        "normalization_integral": norm,
        "normalization_error": abs(norm - dim),
    }
    ok = abs(norm - dim) <= 1e-8
    if config.potential != "all":
        phi = get_potential(config.n, config.potential)
        gaps = {m: bergman_approximation(model, m, phi)["gap"] for m in (1, 2, 4)}
        body["approximation_gaps"] = {str(m): g for m, g in gaps.items()}
        ok &= gaps[4] < gaps[1]
    probe = eigenvalue_control_probe(
        model, config.m, k=min(config.k, max(model.n, 2)), n_rays=config.rays, seed=config.seed
    )
    body["probe_fitted"] = probe["fitted"]
    body["probe_samples"] = len(probe["records"])
    write_csv(
        Path(config.outdir) / "bergman_probe_scatter.csv",
        ["ray", "s", "logratio", "I"],
        [(r["ray"], r["s"], r["logratio"], r["I"]) for r in probe["records"]],
    )
    ok &= all(np.isfinite([r["logratio"], r["I"]]).all() for r in probe["records"])
    return ok, body


def _cmd_alpha(config: RunConfig) -> tuple[bool, dict]:
    model = config.model_instance()
    est = alpha_mk_estimate(
        model,
        config.m,
        config.k,
        n_random=config.probes,
        seed=config.seed,
        max_subspaces=config.budget,
    )
    rows = [
        (str(label), rec["threshold"], rec["bracket"][0], rec["bracket"][1], rec["verdict"])
        for label, rec in est.per_subspace.items()
    ]
    write_csv(
        Path(config.outdir) / "alpha_thresholds.csv",
        ["subspace", "threshold", "bracket_lo", "bracket_hi", "verdict"],
        rows,
    )
    return bool(est.estimate > 0), {"alpha": est.to_dict()}


def _cmd_continuity(config: RunConfig) -> tuple[bool, dict]:
    model = config.model_instance()
    path = cont.run_path(model, dt=config.dt, delta=config.delta, m_rho=config.m)
    outdir = Path(config.outdir)
    write_csv(
        outdir / "t_vs_supphi.csv",
        ["t", "sup_phi", "residual", "mass_residual", "newton_iterations"],
        [(s.t, s.sup_phi, s.residual, s.mass_residual, s.newton_iterations) for s in path.states],
    )
    ks = sorted(path.states[0].ik) if path.states else []
    write_csv(
        outdir / "t_vs_Ik.csv",
        ["t", "I", "J"] + [f"I_{k}" for k in ks],
        [
            tuple([s.t, s.energies["I"], s.energies["J"]] + [s.ik[k] for k in ks])
            for s in path.states
        ],
    )
    write_csv(
        outdir / "t_vs_minrho.csv",
        ["t", "min_rho"],
        [(s.t, s.min_rho) for s in path.states],
    )
    body: dict = {
        "completed": path.completed,
        "failure": path.failure,
        "edge_t": path.edge_t,
        "states": len(path.states),
        "max_residual": max((s.residual for s in path.states), default=0.0),
        "partial_c0_constant": path.partial_c0_constant,
    }
    if len([s for s in path.states if s.t > 0]) >= 2:
        ident = cont.verify_path_identity(path)
        body["path_identity_max_relative_residual"] = ident["max_relative_residual"]
    passed = path.completed and body["max_residual"] <= 1e-9
    return passed, body


def _cmd_criterion(config: RunConfig) -> tuple[bool, dict]:
    if config.alpha1 is None or config.alphak is None:
        raise ValueError("criterion requires --alpha1 and --alphak (rationals like 4/5)")
    chk = check_alpha_criterion(
        config.n, config.k, as_fraction(config.alpha1), as_fraction(config.alphak),
        as_fraction(config.lam),
    )
    body = {key: val for key, val in chk.items()}
    if chk["feasible"]:
        params = choose_parameters(config.n, config.k, config.alpha1, config.alphak)
        body["parameters"] = {
            "beta1": params.beta1,
            "beta_k": params.beta_k,
            "lam": params.lam,
            "lam_capped": params.lam_capped,
        }
    return True, {"criterion": body}


def _cmd_suite(config: RunConfig) -> tuple[bool, dict]:
    report = run_battery(profile=config.profile, seed=config.seed, log=print)
    return report["all_passed"], report


SUBCOMMANDS = {
    "identities": _cmd_identities,
    "functionals": _cmd_functionals,
    "bergman": _cmd_bergman,
    "alpha": _cmd_alpha,
    "continuity": _cmd_continuity,
    "criterion": _cmd_criterion,
    "suite": _cmd_suite,
}


# ---------------------------------------------------------------------------
# argument parsing


def _read_config_file(path: str) -> dict:
    """Flat key=value file; blank lines and #-comments ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kahlerlab",
        description="Numerical laboratory for energy functionals, Bergman "
        "kernels, alpha invariants and the Aubin continuity path on toric "
        "models of CP^n.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file (flags override)")
        p.add_argument("--model", choices=sorted(MODELS), help="cp1, cp2 or cp3")
        p.add_argument("--nodes", type=int, help="quadrature nodes per axis")
        p.add_argument("--seed", type=int, help="seed for randomized draws")
        p.add_argument(
            "--outdir",
            help=f"output directory (default: ${ENV_OUTDIR} or current directory)",
        )

    p = sub.add_parser("identities", help="integral-identity residual matrix")
    common(p)
    p.add_argument("--potential", help="library potential name, or 'all'")

    p = sub.add_parser("functionals", help="I, J and I_k by both routes")
    common(p)
    p.add_argument("--potential", help="library potential name, or 'all'")

    p = sub.add_parser("bergman", help="kernel normalization, approximation, probe")
    common(p)
    p.add_argument("--m", type=int, help="power of the polarization")
    p.add_argument("--k", type=int, help="eigenvalue index for the probe")
    p.add_argument("--rays", type=int, help="number of probe rays")
    p.add_argument("--potential", help="also report approximation gaps for this potential")

    p = sub.add_parser("alpha", help="alpha_{m,k} estimate over section subspaces")
    common(p)
    p.add_argument("--m", type=int, help="power of the polarization")
    p.add_argument("--k", type=int, help="subspace dimension")
    p.add_argument("--probes", type=int, help="random probe subspaces")
    p.add_argument("--budget", type=int, help="max monomial subspaces to enumerate")

    p = sub.add_parser("continuity", help="run the continuity path and emit series")
    common(p)
    p.add_argument("--perturbation", help="library potential perturbing the reference")
    p.add_argument("--dt", type=float, help="time step of the path grid")
    p.add_argument("--delta", type=float, help="stop at t = 1 - delta")
    p.add_argument("--m", type=int, help="Bergman power tracked along the path")

    p = sub.add_parser("criterion", help="exact feasibility check of the criterion")
    common(p)
    p.add_argument("--n", type=int, help="dimension (alternative to --model)")
    p.add_argument("--k", type=int, help="index k of the alpha invariant")
    p.add_argument("--alpha1", help="alpha_{m,1} as an exact rational 'p/q'")
    p.add_argument("--alphak", help="alpha_{m,k} as an exact rational 'p/q'")
    p.add_argument("--lam", help="control slope as an exact rational (default 1)")

    p = sub.add_parser("suite", help="run the acceptance battery")
    common(p)
    p.add_argument("--profile", choices=("quick", "full"), help="battery size")
    return parser


_INT_FIELDS = {"nodes", "m", "k", "rays", "probes", "budget", "seed", "solver_nodes"}
_FLOAT_FIELDS = {"dt", "delta"}


def _assemble_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    for key, val in vars(args).items():
        if key in ("config",) or val is None:
            continue
        values[key] = val
    if getattr(args, "n", None):
        values["model"] = f"cp{args.n}"
    values.pop("n", None)
    if "outdir" not in values:
        values["outdir"] = os.environ.get(ENV_OUTDIR, ".")
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in list(values):
        if key in _INT_FIELDS:
            values[key] = int(values[key])
        elif key in _FLOAT_FIELDS:
            values[key] = float(values[key])
    config = RunConfig(**values)
    config.validate()
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass both through
        return int(exc.code or 0)
    try:
        config = _assemble_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        passed, body = SUBCOMMANDS[config.command](config)
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (cont.ContinuityError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    path = _write_report(config, body, passed)
    print(f"{'PASS' if passed else 'FAIL'}: report written to {path}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
