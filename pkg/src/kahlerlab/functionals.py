"""Energy functionals I_k, I, J and their integral identities.

For a bounded invariant potential phi with omega_phi = omega + i ddbar phi,
the k-indexed energy is

    I_k(phi) = sum_{r=0}^{k-2} avg_int  i dphi ^ dbar phi ^ omega_phi^r ^ omega^{n-r-1}
             = avg_int  phi * [omega^{k-1} - omega_phi^{k-1}] ^ omega^{n-k+1},

where avg_int is the volume-normalized integral.  The gradient-quadratic
summands are never discretized directly: one Stokes step converts each to
potential-times-mixed-Monge-Ampere form,

    avg_int i dphi ^ dbar phi ^ T  =  avg_int phi (omega - omega_phi) ^ T,

and only mixed determinants of Hessians are integrated.  A direct
gradient-form evaluation (through the rank-one matrix grad phi grad phi^T)
is kept as an independent cross-check oracle.

I = I_{n+1} is computed from the difference form avg_int phi (omega^n -
omega_phi^n); J is the weighted sum with coefficients (n-r)/(n+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import InvariantPotential, ToricFanoModel, wedge_density

__all__ = [
    "energy_ik",
    "aubin_energies",
    "dirichlet_term",
    "dirichlet_term_gradient",
    "verify_difference_expansion",
    "verify_energy_difference_expansion",
    "verify_ik_stability",
    "constant_shift_cancellation",
    "FunctionalReport",
    "functional_report",
]


def _hessians(model: ToricFanoModel, phi: InvariantPotential):
    t = model.quad_t
    a_ref = model.ref_hess(t)
    return t, a_ref, a_ref + phi.hess(t)


def _centered_values(model: ToricFanoModel, phi: InvariantPotential) -> np.ndarray:
    """phi at the nodes minus its discrete omega^n average.

    I_k and J are invariant under phi -> phi + c; evaluating their Stokes
    forms with recentered values makes that invariance exact at the node
    level (a raw constant would otherwise pick up the quadrature mismatch
    between the wedge volumes, which all equal V only analytically).
    """
    t = model.quad_t
    vals = phi.value(t)
    dens = wedge_density([model.ref_hess(t)], [model.n])
    w = model.quad_weights
    return vals - float(np.dot(w, vals * dens) / np.dot(w, dens))


def _residual(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def dirichlet_term(model: ToricFanoModel, phi: InvariantPotential, r: int) -> float:
    """avg_int i dphi ^ dbar phi ^ omega_phi^r ^ omega^{n-r-1}, Stokes form."""
    n = model.n
    if not 0 <= r <= n - 1:
        raise ValueError("need 0 <= r <= n-1")
    t, a_ref, a_phi = _hessians(model, phi)
    vals = _centered_values(model, phi)
    dens = wedge_density([a_ref, a_phi, a_ref], [1, r, n - r - 1]) - wedge_density(
        [a_phi, a_ref], [r + 1, n - r - 1]
    )
    return model.integrate_invariant(vals * dens) / model.volume


def dirichlet_term_gradient(model: ToricFanoModel, phi: InvariantPotential, r: int) -> float:
    """Same pairing evaluated from grad phi directly (cross-check oracle).

    The (1,1)-form i dphi ^ dbar phi has Hessian-slot matrix
    grad phi grad phi^T in log coordinates, so the integrand is the mixed
    density of that rank-one matrix against the remaining factors; for
    r = 0, n = 2 this reduces to grad phi^T adj(D^2 F) grad phi.
    """
    n = model.n
    if not 0 <= r <= n - 1:
        raise ValueError("need 0 <= r <= n-1")
    t, a_ref, a_phi = _hessians(model, phi)
    g = phi.grad(t)
    rank1 = np.einsum("mi,mj->mij", g, g)
    dens = wedge_density([rank1, a_phi, a_ref], [1, r, n - r - 1])
    return model.integrate_invariant(dens) / model.volume


def energy_ik(model: ToricFanoModel, phi: InvariantPotential, k: int, form: str = "difference") -> float:
    """I_k(phi) for 2 <= k <= n+1.

    form="difference": avg_int phi [omega^{k-1} - omega_phi^{k-1}] ^ omega^{n-k+1}.
    form="sum": the defining sum of Dirichlet pairings, each one Stokes-converted.
    """
    n = model.n
    if not 2 <= k <= n + 1:
        raise ValueError(f"need 2 <= k <= n+1 = {n + 1}")
    if form == "difference":
        t, a_ref, a_phi = _hessians(model, phi)
        vals = _centered_values(model, phi)
        dens = wedge_density([a_ref], [n]) - wedge_density([a_phi, a_ref], [k - 1, n - k + 1])
        return model.integrate_invariant(vals * dens) / model.volume
    if form == "sum":
        return float(sum(dirichlet_term(model, phi, r) for r in range(k - 1)))
    raise ValueError("form must be 'difference' or 'sum'")


def aubin_energies(model: ToricFanoModel, phi: InvariantPotential) -> dict:
    """I and J with their standard normalizations, plus inequality slacks.

    I = avg_int phi (omega^n - omega_phi^n);  J = sum_r (n-r)/(n+1) * b_r with
    b_r the r-th Dirichlet pairing.  Returns a dict with I, J, I_sum (the sum
    form of I as cross-check), i_minus_j, and (n+1)J - I.
    """
    n = model.n
    terms = [dirichlet_term(model, phi, r) for r in range(n)]
    i_diff = energy_ik(model, phi, n + 1, form="difference")
    i_sum = float(sum(terms))
    j = float(sum((n - r) / (n + 1) * b for r, b in enumerate(terms)))
    return {
        "I": i_diff,
        "I_sum": i_sum,
        "J": j,
        "i_minus_j": i_diff - j,
        "dominance": (n + 1) * j - i_diff,
        "terms": terms,
    }


def verify_difference_expansion(
    model: ToricFanoModel, phi: InvariantPotential, psi: InvariantPotential, r: int
) -> dict:
    """Integral identity expanding avg_int (phi omega_phi^r - psi omega_psi^r) ^ omega^{n-r}.

    The right side pairs (phi - psi) against
        sum_{i=0}^{r} omega_phi^i omega_psi^{r-i} omega^{n-r}
      - sum_{i=0}^{r-1} omega_phi^i omega_psi^{r-1-i} omega^{n-r+1}.
    Returns lhs, rhs and their scaled residual.
    """
    n = model.n
    if not 0 <= r <= n:
        raise ValueError("need 0 <= r <= n")
    t = model.quad_t
    a_ref = model.ref_hess(t)
    a_phi = a_ref + phi.hess(t)
    a_psi = a_ref + psi.hess(t)
    vphi, vpsi = phi.value(t), psi.value(t)

    lhs_dens = vphi * wedge_density([a_phi, a_ref], [r, n - r]) - vpsi * wedge_density(
        [a_psi, a_ref], [r, n - r]
    )
    lhs = model.integrate_invariant(lhs_dens) / model.volume

    bracket = np.zeros(t.shape[0])
    for i in range(r + 1):
        bracket += wedge_density([a_phi, a_psi, a_ref], [i, r - i, n - r])
    for i in range(r):
        bracket -= wedge_density([a_phi, a_psi, a_ref], [i, r - 1 - i, n - r + 1])
    rhs = model.integrate_invariant((vphi - vpsi) * bracket) / model.volume
    return {"r": r, "lhs": lhs, "rhs": rhs, "residual": _residual(lhs, rhs)}


def verify_energy_difference_expansion(
    model: ToricFanoModel, phi: InvariantPotential, psi: InvariantPotential, k: int
) -> dict:
    """Expansion of I_k(phi) - I_k(psi) against (phi - psi).

    The second correction sum is taken against omega^{n-k+2} (the exponent
    forced by degree counting; recorded in the result for transparency).
    """
    n = model.n
    if not 2 <= k <= n + 1:
        raise ValueError(f"need 2 <= k <= n+1 = {n + 1}")
    t = model.quad_t
    a_ref = model.ref_hess(t)
    a_phi = a_ref + phi.hess(t)
    a_psi = a_ref + psi.hess(t)
    lhs = energy_ik(model, phi, k) - energy_ik(model, psi, k)

    bracket = wedge_density([a_ref], [n]).copy()
    for i in range(k):
        bracket -= wedge_density([a_phi, a_psi, a_ref], [i, k - 1 - i, n - k + 1])
    for i in range(k - 1):
        bracket += wedge_density([a_phi, a_psi, a_ref], [i, k - 2 - i, n - k + 2])
    diff = phi.value(t) - psi.value(t)
    rhs = model.integrate_invariant(diff * bracket) / model.volume
    return {
        "k": k,
        "lhs": lhs,
        "rhs": rhs,
        "residual": _residual(lhs, rhs),
        "correction_exponent": n - k + 2,
    }


def constant_shift_cancellation(k: int) -> int:
    """Exact integer coefficient sum 1 - (k-1) + (k-2); zero for every k.

    This is the cancellation that makes the difference expansion insensitive
    to adding one constant to both potentials (each bracketed wedge class
    integrates to the volume, so the constant multiplies this sum).
    """
    return 1 - (k - 1) + (k - 2)


def verify_ik_stability(
    model: ToricFanoModel, phi: InvariantPotential, psi: InvariantPotential, k: int
) -> dict:
    """Check |I_k(phi) - I_k(psi)| <= 2 (k-1) sup|phi - psi|."""
    t = model.quad_t
    c = float(np.max(np.abs(phi.value(t) - psi.value(t))))
    delta = energy_ik(model, phi, k) - energy_ik(model, psi, k)
    bound = 2.0 * (k - 1) * c
    return {"k": k, "c": c, "delta": delta, "bound": bound, "slack": bound - abs(delta)}


@dataclass
class FunctionalReport:
    """Energies and identity/inequality diagnostics for one potential."""

    n: int
    potential: str
    ik_difference: dict[int, float] = field(default_factory=dict)
    ik_sum: dict[int, float] = field(default_factory=dict)
    ik_route_residual: dict[int, float] = field(default_factory=dict)
    I: float = 0.0
    J: float = 0.0
    i_minus_j: float = 0.0
    dominance: float = 0.0
    dominance_slack: dict[int, float] = field(default_factory=dict)
    min_slack_k: int | None = None
    expansion_residuals: dict = field(default_factory=dict)
    correction_exponents: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "potential": self.potential,
            "I": self.I,
            "J": self.J,
            "i_minus_j": self.i_minus_j,
            "dominance": self.dominance,
            "min_slack_k": self.min_slack_k,
        }
        d["I_k"] = {
            str(k): {
                "difference_form": self.ik_difference[k],
                "sum_form": self.ik_sum[k],
                "route_residual": self.ik_route_residual[k],
                "dominance_slack": self.dominance_slack.get(k),
            }
            for k in sorted(self.ik_difference)
        }
        d["expansion_residuals"] = self.expansion_residuals
        d["correction_exponents"] = {str(k): v for k, v in self.correction_exponents.items()}
        return d


def functional_report(
    model: ToricFanoModel,
    phi: InvariantPotential,
    psi: InvariantPotential | None = None,
) -> FunctionalReport:
    """Full report: I_k by both routes, I, J, slacks, expansion residuals.

    Identity residuals that need a comparison potential use psi (defaults to
    the zero potential).
    """
    from .geometry import zero_potential

    n = model.n
    if psi is None:
        psi = zero_potential(n)
    rep = FunctionalReport(n=n, potential=phi.name)
    en = aubin_energies(model, phi)
    rep.I, rep.J = en["I"], en["J"]
    rep.i_minus_j = en["i_minus_j"]
    rep.dominance = en["dominance"]
    for k in range(2, n + 2):
        rep.ik_difference[k] = energy_ik(model, phi, k, form="difference")
        rep.ik_sum[k] = energy_ik(model, phi, k, form="sum")
        rep.ik_route_residual[k] = _residual(rep.ik_difference[k], rep.ik_sum[k])
        if k <= n:
            rep.dominance_slack[k] = rep.dominance - (n - k + 1) * rep.ik_difference[k]
    if rep.dominance_slack:
        rep.min_slack_k = min(rep.dominance_slack, key=rep.dominance_slack.get)
    diff_resid = {}
    for r in range(1, n + 1):
        diff_resid[r] = verify_difference_expansion(model, phi, psi, r)["residual"]
    energy_resid = {}
    for k in range(2, n + 2):
        res = verify_energy_difference_expansion(model, phi, psi, k)
        energy_resid[k] = res["residual"]
        rep.correction_exponents[k] = res["correction_exponent"]
    rep.expansion_residuals = {
        "difference_expansion_by_r": {str(r): v for r, v in diff_resid.items()},
        "energy_difference_by_k": {str(k): v for k, v in energy_resid.items()},
        "psi": psi.name,
    }
    return rep
