"""Exact rational algebra of the alpha-invariant existence criterion.

All arithmetic uses fractions.Fraction; nothing in this module touches
floating point.  The inputs are the dimension n, a level 2 <= k <= n, and
rational (lower bounds for) alpha invariants alpha_1 = alpha(m,1),
alpha_k = alpha(m,k).  The criterion feasible here is

    alpha_k > n/(n+1)   and
    (n(L-1) + k-1) (1/alpha_1 - (n+1)/n)  <  (n-k+1) ((n+1)/n - 1/alpha_k)

with L >= 1 an eigenvalue-control slope (L = 1 is the strong form, whose
bracketed inequality rearranges to (k-1)/alpha_1 + (n-k+1)/alpha_k < n+1).

Feasible inputs yield auxiliary parameters (beta_1, beta_k, L) feeding a
positive linear combination of three a priori inequalities whose I_k and
energy coefficients cancel exactly, leaving a positive multiple of sup phi
bounded by a constant; verify_linear_combination checks those cancellations
in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

FractionLike = Union[Fraction, int, str]

__all__ = [
    "as_fraction",
    "check_alpha_criterion",
    "choose_parameters",
    "verify_linear_combination",
    "epsilon_margin",
    "CriterionParameters",
]


def as_fraction(x: FractionLike) -> Fraction:
    """Parse an exact rational: Fraction, int, or a 'p/q' / decimal string."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        raise TypeError("floats are not accepted; pass a string like '2/3'")
    return Fraction(str(x).strip())


def _validate_nk(n: int, k: int) -> None:
    if not (isinstance(n, int) and 1 <= n):
        raise ValueError("n must be a positive integer")
    if not (isinstance(k, int) and 2 <= k <= n):
        raise ValueError(f"k must satisfy 2 <= k <= n (got n={n}, k={k})")


def check_alpha_criterion(
    n: int,
    k: int,
    alpha1: FractionLike,
    alpha_k: FractionLike,
    lam: FractionLike = 1,
) -> dict:
    """Evaluate the existence criterion exactly.

    Returns a dict with verdict 'feasible' / 'infeasible' /
    'infeasible-boundary' (boundary = some inequality holds with equality),
    the exact bracketed left/right sides, and the rearranged two-term value
    (whose equivalence with the bracketed form is asserted).
    """
    _validate_nk(n, k)
    a1, ak, L = as_fraction(alpha1), as_fraction(alpha_k), as_fraction(lam)
    if a1 <= 0 or ak <= 0:
        raise ValueError("alpha values must be positive")
    if L < 1:
        raise ValueError("the control slope must satisfy lam >= 1")
    weight = n * (L - 1) + (k - 1)
    lhs = weight * (Fraction(1, 1) / a1 - Fraction(n + 1, n))
    rhs = (n - k + 1) * (Fraction(n + 1, n) - Fraction(1, 1) / ak)
    # rearranged: weight/alpha_1 + (n-k+1)/alpha_k < (n+1) * (weight + n-k+1)/n
    two_term = weight / a1 + Fraction(n - k + 1) / ak
    two_term_bound = Fraction(n + 1, n) * (weight + n - k + 1)
    assert (lhs < rhs) == (two_term < two_term_bound), "rearrangement must be an equivalence"
    assert (lhs == rhs) == (two_term == two_term_bound)
    alpha_condition = ak > Fraction(n, n + 1)
    boundary = ak == Fraction(n, n + 1) or lhs == rhs
    feasible = alpha_condition and lhs < rhs
    if feasible:
        verdict = "feasible"
    elif boundary:
        verdict = "infeasible-boundary"
    else:
        verdict = "infeasible"
    return {
        "n": n,
        "k": k,
        "alpha1": a1,
        "alpha_k": ak,
        "lam": L,
        "verdict": verdict,
        "feasible": feasible,
        "boundary": boundary,
        "alpha_k_condition": alpha_condition,
        "bracket_lhs": lhs,
        "bracket_rhs": rhs,
        "two_term": two_term,
        "two_term_bound": two_term_bound,
    }


@dataclass(frozen=True)
class CriterionParameters:
    """Exact auxiliary parameters produced by choose_parameters."""

    n: int
    k: int
    alpha1: Fraction
    alpha_k: Fraction
    beta1: Fraction
    beta_k: Fraction
    lam: Fraction
    lam_capped: bool

    def constraints_hold(self) -> bool:
        n, k = self.n, self.k
        b1, bk, L = self.beta1, self.beta_k, self.lam
        inv_n = Fraction(1, n)
        ok = b1 >= 0
        ok &= b1 > 1 / self.alpha1 - 1
        ok &= (bk > 1 / self.alpha_k - 1) and (bk < inv_n)
        ok &= L > 1
        ok &= (n * (L - 1) + (k - 1)) * (b1 - inv_n) < (n - k + 1) * (inv_n - bk)
        return bool(ok)


def choose_parameters(
    n: int, k: int, alpha1: FractionLike, alpha_k: FractionLike
) -> CriterionParameters:
    """Deterministic exact choice of (beta_1, beta_k, lam) for feasible input.

    beta_k sits at the midpoint of its interval (moved toward its lower end
    when needed to leave room for beta_1), beta_1 at the midpoint of what the
    lam -> 1 parameter inequality allows, and lam takes 90% of the headroom
    above 1 (capped at 2 when beta_1 <= 1/n, where every lam > 1 works).

    Raises ValueError when the criterion is infeasible; the boundary case is
    reported distinctly in the error message.
    """
    chk = check_alpha_criterion(n, k, alpha1, alpha_k)
    if not chk["feasible"]:
        raise ValueError(f"criterion {chk['verdict']} for the given alphas")
    a1, ak = chk["alpha1"], chk["alpha_k"]
    inv_n = Fraction(1, n)
    lo_k = 1 / ak - 1  # < 1/n since alpha_k > n/(n+1)
    lo_1 = max(Fraction(0), 1 / a1 - 1)
    beta_k = beta1 = None
    frac = Fraction(1, 2)
    for _ in range(64):
        bk = lo_k + (inv_n - lo_k) * frac
        up_1 = inv_n + (n - k + 1) * (inv_n - bk) / (k - 1)
        if lo_1 < up_1:
            beta_k, beta1 = bk, (lo_1 + up_1) / 2
            break
        frac = frac / 2
    assert beta_k is not None, "feasible input must admit parameters"
    if beta1 <= inv_n:
        lam, capped = Fraction(2), True
    else:
        # equality slope: n (lam* - 1) + k - 1 = (n-k+1)(1/n - beta_k)/(beta1 - 1/n)
        lam_star = 1 + ((n - k + 1) * (inv_n - beta_k) / (beta1 - inv_n) - (k - 1)) / n
        lam, capped = 1 + Fraction(9, 10) * (lam_star - 1), False
    params = CriterionParameters(
        n=n, k=k, alpha1=a1, alpha_k=ak, beta1=beta1, beta_k=beta_k, lam=lam, lam_capped=capped
    )
    if not params.constraints_hold():
        raise AssertionError("parameter constraints failed exact re-verification")
    return params


def verify_linear_combination(
    n: int, k: int, beta1: FractionLike, beta_k: FractionLike, lam: FractionLike
) -> dict:
    """Exact coefficient bookkeeping of the three-inequality combination.

    The inequalities being combined (constants suppressed) are
        (C):  energy + (n-k+1) I_k <= n sup
        (A):  sup <= beta_1 * energy
        (B):  sup <= beta_k * energy + lam * I_k
    with weights w_C = beta_1 lam, w_A = lam - (n-k+1) beta_k,
    w_B = (n-k+1) beta_1.  The I_k and energy coefficients cancel exactly;
    what remains bounds (w_A + w_B - n w_C) * sup, and that sup coefficient
    factors as (n lam - n + k - 1)(1/n - beta_1) + (n-k+1)(1/n - beta_k).
    """
    _validate_nk(n, k)
    b1, bk, L = as_fraction(beta1), as_fraction(beta_k), as_fraction(lam)
    w_c = b1 * L
    w_a = L - (n - k + 1) * bk
    w_b = (n - k + 1) * b1
    coef_ik = w_c * (n - k + 1) - w_b * L
    coef_energy = w_c - w_a * b1 - w_b * bk
    sup_direct = w_a + w_b - n * w_c
    inv_n = Fraction(1, n)
    sup_factored = (n * L - n + k - 1) * (inv_n - b1) + (n - k + 1) * (inv_n - bk)
    assert sup_direct == sup_factored, "sup-coefficient factorization must be exact"
    return {
        "weights": (w_c, w_a, w_b),
        "weights_nonnegative": w_c >= 0 and w_a >= 0 and w_b >= 0,
        "coef_ik": coef_ik,
        "coef_energy": coef_energy,
        "sup_coefficient": sup_direct,
        "sup_coefficient_positive": sup_direct > 0,
    }


def epsilon_margin(n: int, k: int, alpha_k: FractionLike) -> Fraction:
    """Largest slack below n/(n+1) for alpha_1 keeping the criterion feasible.

    The two-term inequality solved for alpha_1 gives the critical value
    (k-1) / [(n+1) - (n-k+1)/alpha_k]; the margin is n/(n+1) minus that.
    Zero exactly on the boundary alpha_k = n/(n+1), strictly increasing in
    alpha_k.  Requires alpha_k >= n/(n+1) (below that the slack is undefined).
    """
    _validate_nk(n, k)
    ak = as_fraction(alpha_k)
    if ak <= 0:
        raise ValueError("alpha_k must be positive")
    if ak < Fraction(n, n + 1):
        raise ValueError("epsilon margin requires alpha_k >= n/(n+1)")
    denom = (n + 1) - Fraction(n - k + 1) / ak
    if denom <= 0:
        raise ValueError("degenerate denominator; alpha_k too small")
    return Fraction(n, n + 1) - Fraction(k - 1) / denom
