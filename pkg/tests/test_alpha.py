"""Tests for divergence classification and alpha-invariant thresholds.

Threshold oracles used below are hand-derived from the asymptotics of the
subspace densities on the torus chart of CP^1 (degree-2 sections at m = 1):

  span(1):     rho ~ |z|^{-4} at infinity       -> threshold 1/2
  span(z):     rho ~ |z|^{-2} at both 0, inf    -> threshold 1
  span(z^2):   mirror of span(1)                -> threshold 1/2
  span(1,z^2): nonvanishing at both ends        -> no divergence
  (1+z)^2:     double zero at z = -1            -> threshold 1/2
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from kahlerlab.alpha import (
    alpha_mk_estimate,
    classify_growth,
    integral_vs_alpha,
    lct_threshold,
)
from kahlerlab.bergman import SectionSubspace, section_basis
from kahlerlab.geometry import ToricFanoModel
from kahlerlab.potentials import get_potential

CP1 = ToricFanoModel(1)
LEVELS = list(range(8, 27, 2))


def cp1_subspace(exponents) -> SectionSubspace:
    return SectionSubspace.from_exponents(section_basis(CP1, 1), exponents)


# ---------------------------------------------------------------------------
# growth classification on synthetic sequences


def test_classify_growth_geometric_convergence():
    inc = 0.5 ** np.arange(10)
    vals = np.cumsum(inc)
    assert classify_growth(vals, LEVELS[: len(vals)]) == "convergent"


def test_classify_growth_clear_divergence():
    vals = [1.0, 2.0, 4.5, 11.0, 30.0]
    assert classify_growth(vals, LEVELS[:5]) == "divergent"


def test_classify_growth_overflow_is_divergent():
    vals = [1.0, 2.0, math.inf, math.inf]
    assert classify_growth(vals, LEVELS[:4]) == "divergent"


def test_classify_growth_flat_increments_divergent():
    # constant increments = logarithmic divergence exactly at threshold
    vals = 1.0 + 0.01 * np.arange(8)
    assert classify_growth(vals, LEVELS[:8]) == "divergent"


def test_classify_growth_dead_increments_convergent():
    vals = np.ones(6) * 3.7
    vals[1:] += 1e-15
    assert classify_growth(vals, LEVELS[:6]) == "convergent"


def test_classify_growth_decaying_with_polynomial_factor():
    # increments L^2 rho^L with rho < 1 must still classify as convergent
    ell = np.asarray(LEVELS, dtype=float)
    inc = ell**2 * 0.7**ell
    vals = np.cumsum(inc)
    assert classify_growth(vals, LEVELS) == "convergent"


# ---------------------------------------------------------------------------
# integrals and thresholds on CP^1


def test_integral_grows_past_threshold():
    sub = cp1_subspace([(0,)])
    shallow = integral_vs_alpha(CP1, 1, sub, 0.9, 12)
    deeper = integral_vs_alpha(CP1, 1, sub, 0.9, 22)
    assert deeper / shallow > 2.0  # alpha = 0.9 > 1/2 diverges
    below_s = integral_vs_alpha(CP1, 1, sub, 0.25, 20)
    below_d = integral_vs_alpha(CP1, 1, sub, 0.25, 24)
    assert abs(below_d - below_s) < 1e-3 * below_s  # stabilized, not growing


def test_threshold_span_one():
    res = lct_threshold(CP1, 1, cp1_subspace([(0,)]))
    assert res.verdict == "resolved"
    assert res.finite
    assert res.threshold == pytest.approx(0.5, abs=0.02)
    assert res.bracket[1] - res.bracket[0] <= 0.011


def test_threshold_span_z():
    res = lct_threshold(CP1, 1, cp1_subspace([(1,)]))
    assert res.threshold == pytest.approx(1.0, abs=0.02)


def test_threshold_symmetry_under_lattice_flip():
    lo = lct_threshold(CP1, 1, cp1_subspace([(0,)]))
    hi = lct_threshold(CP1, 1, cp1_subspace([(2,)]))
    assert lo.threshold == pytest.approx(hi.threshold, abs=1e-9)


def test_threshold_base_point_free_pair():
    res = lct_threshold(CP1, 1, cp1_subspace([(0,), (2,)]))
    assert res.verdict == "no-divergence"
    assert math.isinf(res.threshold)
    assert not res.finite


def test_threshold_double_zero_coefficient_subspace():
    # (1+z)^2 as a rank-one coefficient subspace; torus quadrature route
    basis = section_basis(CP1, 1)
    coeffs = np.array([[1.0], [2.0], [1.0]])
    res = lct_threshold(CP1, 1, SectionSubspace(basis=basis, coeffs=coeffs))
    assert res.threshold == pytest.approx(0.5, abs=0.03)


def test_threshold_invariant_under_coefficient_scaling():
    basis = section_basis(CP1, 1)
    a = lct_threshold(CP1, 1, SectionSubspace(basis=basis, coeffs=np.array([[1.0], [2.0], [1.0]])))
    b = lct_threshold(CP1, 1, SectionSubspace(basis=basis, coeffs=np.array([[3.0], [6.0], [3.0]])))
    assert a.threshold == b.threshold
    assert a.bracket == b.bracket


def test_threshold_independent_of_reference_perturbation():
    # the log canonical threshold is independent of the metric; a perturbed
    # reference must reproduce the same bracket up to bisection width
    pert = ToricFanoModel(1, perturbation=get_potential(1, "gauss_plus"))
    res = lct_threshold(pert, 1, SectionSubspace.from_exponents(section_basis(pert, 1), [(0,)]))
    assert res.threshold == pytest.approx(0.5, abs=0.02)


def test_coefficient_subspaces_limited_to_rank_one_on_cp1():
    basis = section_basis(CP1, 1)
    coeffs = np.array([[1.0, 0.5], [2.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NotImplementedError):
        lct_threshold(CP1, 1, SectionSubspace(basis=basis, coeffs=coeffs))
    basis2 = section_basis(ToricFanoModel(2), 1)
    c2 = np.ones((basis2.size, 1))
    with pytest.raises(NotImplementedError):
        lct_threshold(ToricFanoModel(2), 1, SectionSubspace(basis=basis2, coeffs=c2))


# ---------------------------------------------------------------------------
# search over subspaces


def test_alpha_estimate_cp1_k1():
    est = alpha_mk_estimate(CP1, 1, 1, n_random=4, seed=7)
    assert est.estimate == pytest.approx(0.5, abs=0.02)
    assert est.extremal in (((0,),), ((2,),))
    assert est.monomial_count == 3
    assert est.random_probe_count == 4
    assert not est.partial
    # random rank-one probes can only see thresholds >= the monomial minimum
    assert est.random_probe_min >= est.estimate - 0.02


def test_alpha_estimate_cp1_k2():
    est = alpha_mk_estimate(CP1, 1, 2, n_random=0, seed=0)
    assert est.estimate == pytest.approx(1.0, abs=0.05)
    d = est.to_dict()
    assert d["bound_direction"] == "upper"
    assert d["monomial_count"] == 3


def test_alpha_estimate_validates_k():
    with pytest.raises(ValueError):
        alpha_mk_estimate(CP1, 1, 9)


def test_alpha_estimate_partial_subsampling():
    est = alpha_mk_estimate(CP1, 2, 2, n_random=0, seed=1, max_subspaces=4)
    assert est.partial
    assert est.monomial_count == 4
