"""Acceptance battery: the end-to-end verification checks, one per area.

Each check returns a CheckResult with a pass flag and the measured numbers
that justify it; run_battery executes a profile ("quick" for smoke coverage,
"full" for the complete battery at the documented tolerances) and collects
the results into a serializable report.  The test suite and the ``suite``
CLI subcommand both run exactly these functions, so there is a single source
of truth for what the package promises.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .alpha import alpha_mk_estimate
from .bergman import (
    SectionSubspace,
    bergman_approximation,
    bergman_kernel,
    eigenvalue_control_probe,
    section_basis,
)
from .criterion import (
    check_alpha_criterion,
    choose_parameters,
    epsilon_margin,
    verify_linear_combination,
)
from .functionals import (
    aubin_energies,
    constant_shift_cancellation,
    energy_ik,
    functional_report,
    verify_ik_stability,
)
from .geometry import ToricFanoModel
from .potentials import get_potential, library, random_potential
from . import continuity as cont

__all__ = [
    "CheckResult",
    "check_identities",
    "check_ik_stability",
    "check_inequalities",
    "check_alpha_goldens",
    "check_bergman_normalization",
    "check_bergman_approximation",
    "check_continuity",
    "check_criterion_algebra",
    "check_eigenvalue_probe",
    "ALL_CHECKS",
    "run_battery",
]


@dataclass
class CheckResult:
    """Outcome of one acceptance check."""

    name: str
    passed: bool
    seconds: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "seconds": self.seconds,
            "details": self.details,
        }


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# 1. integral identities


def check_identities(profile: str = "full") -> CheckResult:
    """Expansion identities across the potential library (paired potentials).

    Residuals of the difference expansions must be <= 1e-6 relative for
    n in {1, 2}; n = 3 is spot-checked at reduced quadrature against 1e-4.
    """

    def run():
        worst: dict = {}
        ok = True
        plans = [(1, None, 1e-6), (2, None, 1e-6)]
        if profile == "full":
            plans.append((3, 24, 1e-4))
        for n, nodes, tol in plans:
            model = ToricFanoModel(n, nodes_per_axis=nodes)
            names = list(library(n))
            if profile == "quick":
                names = names[:3]
            elif n == 3:
                names = names[:2]
            residual = 0.0
            for i, name in enumerate(names):
                phi = get_potential(n, name)
                psi = get_potential(n, names[i - 1]) if i else None
                rep = functional_report(model, phi, psi)
                for branch in ("difference_expansion_by_r", "energy_difference_by_k"):
                    for v in rep.expansion_residuals[branch].values():
                        if isinstance(v, float):
                            residual = max(residual, abs(v))
            worst[f"n={n}"] = residual
            ok &= residual <= tol
        return ok, worst

    (ok, worst), dt = _timed(run)
    return CheckResult("identities", ok, dt, {"worst_residual": worst})


# ---------------------------------------------------------------------------
# 2. I_k Lipschitz stability and the exact cancellation


def check_ik_stability(profile: str = "full", seed: int = 0) -> CheckResult:
    """|I_k(phi) - I_k(psi)| <= 2(k-1) sup|phi-psi| on seeded random pairs."""

    def run():
        pairs = 100 if profile == "full" else 10
        dims = (1, 2, 3) if profile == "full" else (1, 2)
        rng = np.random.default_rng(seed)
        min_slack = math.inf
        checked = 0
        for n in dims:
            model = ToricFanoModel(n)
            for _ in range(pairs):
                phi = random_potential(model, rng, name="a")
                psi = random_potential(model, rng, name="b")
                for k in range(2, n + 2):
                    res = verify_ik_stability(model, phi, psi, k)
                    min_slack = min(min_slack, res["slack"])
                    checked += 1
        cancel = all(constant_shift_cancellation(k) == 0 for k in range(2, 11))
        ok = min_slack >= -1e-6 and cancel
        return ok, {"pairs_checked": checked, "min_slack": min_slack, "cancellation_exact": cancel}

    (ok, details), dt = _timed(run)
    return CheckResult("ik-stability", ok, dt, details)


# ---------------------------------------------------------------------------
# 3. functional inequalities


def check_inequalities(profile: str = "full") -> CheckResult:
    """I - J >= 0, (n+1)J - I >= 0, I equals I_{n+1}, constant invariance."""

    def run():
        dims = (1, 2, 3) if profile == "full" else (1, 2)
        mins = {"i_minus_j": math.inf, "dominance": math.inf}
        max_route = 0.0
        max_shift = 0.0
        for n in dims:
            model = ToricFanoModel(n)
            names = list(library(n))
            if profile == "quick":
                names = names[:3]
            elif n == 3:
                names = names[:4]
            for name in names:
                phi = get_potential(n, name)
                en = aubin_energies(model, phi)
                mins["i_minus_j"] = min(mins["i_minus_j"], en["i_minus_j"])
                mins["dominance"] = min(mins["dominance"], en["dominance"])
                i_sum = energy_ik(model, phi, n + 1, form="sum")
                scale = max(1.0, abs(en["I"]))
                max_route = max(max_route, abs(en["I"] - i_sum) / scale)
                shifted = phi.shifted(0.7)
                for k in range(2, n + 2):
                    for form in ("difference", "sum"):
                        d = energy_ik(model, shifted, k, form) - energy_ik(model, phi, k, form)
                        max_shift = max(max_shift, abs(d))
        ok = (
            mins["i_minus_j"] >= -1e-9
            and mins["dominance"] >= -1e-9
            and max_route <= 1e-8
            and max_shift <= 1e-9
        )
        return ok, {
            "min_i_minus_j": mins["i_minus_j"],
            "min_dominance": mins["dominance"],
            "max_i_route_residual": max_route,
            "max_constant_shift": max_shift,
        }

    (ok, details), dt = _timed(run)
    return CheckResult("inequalities", ok, dt, details)


# ---------------------------------------------------------------------------
# 4. alpha-invariant golden values
#
# Oracles (local integrability exponents of the extremal monomial subspaces,
# computed by hand):
#   * CP^1, m=1, k=1: worst subspace is span(1) (or span(z)); rho vanishes
#     like |z|^2 at one pole, and with the anticanonical weight the integral
#     int rho^{-alpha} converges iff alpha < 1/2.  alpha_{1,1} = 1/2.
#   * CP^1, m=1, k=2: the full space has rho > 0 everywhere (no base locus);
#     the threshold comes from the worst single direction mu_1 >> mu_2,
#     degenerating to the k=1 pole rate on each end but with both monomials
#     present: alpha_{1,2} = 1.
#   * CP^2, m=1, k=1: span(1) vanishes like |z|^4 at the far coordinate line
#     (two transverse |z|^2 factors meeting it); integrability of rho^{-alpha}
#     there requires alpha < 1/3.  alpha_{1,1} = 1/3.


def check_alpha_goldens(profile: str = "full") -> CheckResult:
    """Estimated alpha_{m,k} against hand-computed integrability exponents."""

    def run():
        cases = [(1, 1, 1, 0.50, 0.02)]
        if profile == "full":
            cases += [(1, 1, 2, 1.00, 0.05), (2, 1, 1, 1.0 / 3.0, 0.02)]
        rows = []
        ok = True
        for n, m, k, target, tol in cases:
            model = ToricFanoModel(n)
            est = alpha_mk_estimate(model, m, k, n_random=10, seed=7)
            good = abs(est.estimate - target) <= tol
            ok &= good
            rows.append(
                {
                    "n": n,
                    "m": m,
                    "k": k,
                    "estimate": est.estimate,
                    "target": target,
                    "tol": tol,
                    "ok": good,
                }
            )
        return ok, {"cases": rows}

    (ok, details), dt = _timed(run)
    return CheckResult("alpha-goldens", ok, dt, details)


# ---------------------------------------------------------------------------
# 5. Bergman normalization


def _random_subspace(basis, rng: np.random.Generator) -> SectionSubspace:
    k = int(rng.integers(1, basis.size + 1))
    for _ in range(20):
        c = rng.standard_normal((basis.size, k)) + 1j * rng.standard_normal((basis.size, k))
        try:
            sub = SectionSubspace(basis=basis, coeffs=c)
            bergman_kernel(basis.model, basis.m, sub)
            return sub
        except ArithmeticError:
            continue
    raise RuntimeError("could not draw a well-conditioned subspace")


def check_bergman_normalization(profile: str = "full", seed: int = 0) -> CheckResult:
    """Integral of rho equals dim V; full-space rho is the constant N/V."""

    def run():
        if profile == "full":
            plans = [(1, m, 50) for m in (1, 2, 3, 4)] + [(2, m, 50) for m in (1, 2)]
        else:
            plans = [(1, m, 8) for m in (1, 2)]
        rng = np.random.default_rng(seed)
        max_norm_err = 0.0
        max_const_err = 0.0
        count = 0
        for n, m, draws in plans:
            model = ToricFanoModel(n)
            basis = section_basis(model, m)
            for _ in range(draws):
                sub = _random_subspace(basis, rng)
                kern = bergman_kernel(model, m, sub)
                max_norm_err = max(
                    max_norm_err, abs(kern.normalization_integral() - sub.dim)
                )
                count += 1
            full = bergman_kernel(model, m)
            rho = full.value(model.quad_t)
            const = basis.size / model.analytic_volume
            max_const_err = max(max_const_err, float(np.max(np.abs(rho - const))) / const)
        ok = max_norm_err <= 1e-8 and max_const_err <= 1e-8
        return ok, {
            "subspaces": count,
            "max_normalization_error": max_norm_err,
            "max_constant_deviation": max_const_err,
        }

    (ok, details), dt = _timed(run)
    return CheckResult("bergman-normalization", ok, dt, details)


# ---------------------------------------------------------------------------
# 6. Bergman approximation gap shrinks with m


def check_bergman_approximation(profile: str = "full") -> CheckResult:
    """Weighted-sum approximation: sup gap at m = 4 beats m = 1 on CP^1."""

    def run():
        model = ToricFanoModel(1)
        names = list(library(1))
        if profile == "quick":
            names = names[:3]
        rows = []
        ok = True
        for name in names:
            phi = get_potential(1, name)
            g1 = bergman_approximation(model, 1, phi)["gap"]
            g4 = bergman_approximation(model, 4, phi)["gap"]
            good = g4 < g1
            ok &= good
            rows.append({"potential": name, "gap_m1": g1, "gap_m4": g4, "ok": good})
        return ok, {"gaps": rows}

    (ok, details), dt = _timed(run)
    return CheckResult("bergman-approximation", ok, dt, details)


# ---------------------------------------------------------------------------
# 7. continuity-path battery


def check_continuity(profile: str = "full") -> CheckResult:
    """Trivial paths, the perturbed CP^1 path, and the n = 2 slack profile."""

    def run():
        details: dict = {}
        ok = True

        # trivial reference: f = 0 must give phi identically zero
        t0 = time.perf_counter()
        trivial_sup = 0.0
        for n in (1, 2):
            path = cont.run_path(ToricFanoModel(n), dt=0.05, m_rho=1)
            trivial_sup = max(trivial_sup, max(s.sup_phi for s in path.states))
        details["trivial_sup_phi"] = trivial_sup
        ok &= trivial_sup <= 1e-10

        # perturbed CP^1 path at dt = 0.01
        model1 = ToricFanoModel(1, perturbation=get_potential(1, "gauss_plus"))
        solver1 = cont.Solver1D(model1)
        dt_path = 0.01 if profile == "full" else 0.05
        path1 = cont.run_path(model1, dt=dt_path, m_rho=1, solver=solver1)
        res_max = max(s.residual for s in path1.states)
        details["perturbed_max_residual"] = res_max
        details["perturbed_states"] = len(path1.states)
        ok &= path1.completed and res_max <= 1e-10

        # pointwise density identity e^{t phi} omega_phi^n = e^f omega^n at
        # the collocation nodes, in absolute density units
        pointwise = 0.0
        for s in path1.states[1 :: max(1, len(path1.states) // 8)]:
            r, _ = solver1._residual(s.t, s.phi_grid)
            pointwise = max(pointwise, float(np.max(np.abs(np.exp(s.t * s.phi_grid) * r))))
        details["pointwise_identity"] = pointwise
        ok &= pointwise <= 5e-10

        if profile == "full":
            ident = cont.verify_path_identity(path1)
            path1h = cont.run_path(model1, dt=dt_path / 2, m_rho=1)
            identh = cont.verify_path_identity(path1h)
            ratio = ident["max_relative_residual"] / max(identh["max_relative_residual"], 1e-300)
            details["identity_residual"] = ident["max_relative_residual"]
            details["identity_residual_halved"] = identh["max_relative_residual"]
            details["identity_refinement_ratio"] = ratio
            ok &= ident["max_relative_residual"] <= 1e-3 and ratio >= 3.0

            # min rho positive and stable under mesh doubling
            fine = cont.Solver1D(model1, nodes=2 * solver1.mesh.size)
            pathf = cont.run_path(model1, dt=dt_path, m_rho=1, solver=fine)
            rho_b = min(s.min_rho for s in path1.states)
            rho_f = min(s.min_rho for s in pathf.states)
            details["min_rho"] = rho_b
            details["min_rho_doubled"] = rho_f
            details["min_rho_rel_change"] = abs(rho_b - rho_f) / rho_b
            ok &= rho_b > 0 and abs(rho_b - rho_f) / rho_b <= 0.05
        details["runtime_n1"] = time.perf_counter() - t0
        ok &= details["runtime_n1"] <= 300.0

        if profile == "full":
            t1 = time.perf_counter()
            model2 = ToricFanoModel(2, perturbation=get_potential(2, "gauss_plus"))
            path2 = cont.run_path(model2, dt=0.02, m_rho=1)
            est = cont.verify_apriori_estimates(model2, path2, k=2)
            slack = float(np.min(est["apriori_slack"]))
            details["n2_apriori_slack_min"] = slack
            details["n2_max_residual"] = est["max_residual"]
            details["n2_states"] = len(path2.states)
            details["runtime_n2"] = time.perf_counter() - t1
            ok &= path2.completed and slack >= -1e-6
            ok &= est["max_residual"] <= 1e-10
            ok &= details["runtime_n2"] <= 1200.0
        return ok, details

    (ok, details), dt = _timed(run)
    return CheckResult("continuity", ok, dt, details)


# ---------------------------------------------------------------------------
# 8. exact criterion algebra


def _random_fraction(rng: np.random.Generator, lo: Fraction, hi: Fraction) -> Fraction:
    den = int(rng.integers(1, 60))
    lo_num = int(math.floor(lo * den)) + 1
    hi_num = int(math.ceil(hi * den)) - 1
    if hi_num < lo_num:
        return (lo + hi) / 2
    return Fraction(int(rng.integers(lo_num, hi_num + 1)), den)


def check_criterion_algebra(profile: str = "full", seed: int = 0) -> CheckResult:
    """Exact cancellations, parameter choice, and form equivalence."""

    def run():
        tuples = 10_000 if profile == "full" else 1_000
        rng = np.random.default_rng(seed)
        cancel_ok = True
        for _ in range(tuples):
            n = int(rng.integers(2, 4))
            k = int(rng.integers(2, n + 1))
            b1 = _random_fraction(rng, Fraction(0), Fraction(3))
            bk = _random_fraction(rng, Fraction(0), Fraction(3))
            lam = _random_fraction(rng, Fraction(1), Fraction(4))
            res = verify_linear_combination(n, k, b1, bk, lam)
            cancel_ok &= res["coef_ik"] == 0 and res["coef_energy"] == 0

        # the two criterion forms agree (asserted inside check_alpha_criterion)
        # and choose_parameters always yields a positive sup coefficient
        equiv = 0
        chosen = 0
        sup_pos_ok = True
        for _ in range(tuples):
            n = int(rng.integers(2, 4))
            k = int(rng.integers(2, n + 1))
            a1 = _random_fraction(rng, Fraction(1, 100), Fraction(3))
            ak = _random_fraction(rng, Fraction(1, 100), Fraction(3))
            chk = check_alpha_criterion(n, k, a1, ak)
            equiv += 1
            if chk["feasible"]:
                params = choose_parameters(n, k, a1, ak)
                comb = verify_linear_combination(n, k, params.beta1, params.beta_k, params.lam)
                sup_pos_ok &= bool(comb["sup_coefficient_positive"])
                sup_pos_ok &= bool(comb["weights_nonnegative"])
                chosen += 1
        margin = epsilon_margin(3, 2, Fraction(4, 5))
        margin_ok = margin == Fraction(1, 12)
        ok = cancel_ok and sup_pos_ok and margin_ok and chosen > 0
        return ok, {
            "tuples": tuples,
            "cancellation_exact": cancel_ok,
            "equivalence_checked": equiv,
            "feasible_parameter_choices": chosen,
            "sup_coefficient_positive": sup_pos_ok,
            "epsilon_margin_example": str(margin),
        }

    (ok, details), dt = _timed(run)
    return CheckResult("criterion-algebra", ok, dt, details)


# ---------------------------------------------------------------------------
# 9. eigenvalue-control probe


def check_eigenvalue_probe(profile: str = "full", seed: int = 0) -> CheckResult:
    """Scatter probe on CP^1: anchored at the origin, finite fit, stable at
    ray scale s = 40."""

    def run():
        model = ToricFanoModel(1)
        ms = (1, 2) if profile == "full" else (1,)
        rays = 200 if profile == "full" else 40
        ok = True
        rows = []
        for m in ms:
            probe = eigenvalue_control_probe(model, m, k=2, n_rays=rays, seed=seed)
            rec = probe["records"]
            origin = [r for r in rec if r["s"] == 0.0]
            anchored = all(abs(r["logratio"]) <= 1e-12 and abs(r["I"]) <= 1e-9 for r in origin)
            finite = all(math.isfinite(r["logratio"]) and math.isfinite(r["I"]) for r in rec)
            lam = probe["fitted"]["lam"]
            smax = max(r["s"] for r in rec)
            good = anchored and finite and math.isfinite(lam) and smax >= 40.0
            good &= probe["n_rays"] >= rays
            ok &= good
            rows.append(
                {
                    "m": m,
                    "rays": probe["n_rays"],
                    "samples": len(rec),
                    "anchored": anchored,
                    "finite": finite,
                    "fitted_lam": lam,
                    "fitted_C": probe["fitted"]["C"],
                    "max_s": smax,
                }
            )
        return ok, {"probes": rows}

    (ok, details), dt = _timed(run)
    return CheckResult("eigenvalue-probe", ok, dt, details)


# ---------------------------------------------------------------------------
# battery runner


ALL_CHECKS = [
    check_identities,
    check_ik_stability,
    check_inequalities,
    check_alpha_goldens,
    check_bergman_normalization,
    check_bergman_approximation,
    check_continuity,
    check_criterion_algebra,
    check_eigenvalue_probe,
]

_SEEDED = {"check_ik_stability", "check_bergman_normalization",
           "check_criterion_algebra", "check_eigenvalue_probe"}


def run_battery(profile: str = "full", seed: int = 0, checks=None, log=None) -> dict:
    """Run the acceptance checks and collect a report.

    Args:
        profile: "quick" or "full".
        seed: base seed for every randomized check.
        checks: optional subset of the check callables.
        log: optional callable receiving one status line per check.

    Returns:
        dict with the per-check results and an overall pass flag.
    """
    if profile not in ("quick", "full"):
        raise ValueError("profile must be 'quick' or 'full'")
    results = []
    for fn in checks if checks is not None else ALL_CHECKS:
        if fn.__name__ in _SEEDED:
            res = fn(profile, seed)
        else:
            res = fn(profile)
        if log is not None:
            log(res.line())
        results.append(res)
    return {
        "profile": profile,
        "seed": seed,
        "all_passed": all(r.passed for r in results),
        "results": [r.to_dict() for r in results],
    }
