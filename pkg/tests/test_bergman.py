"""Tests for section bases, Bergman kernels, and the eigenvalue probe."""

from __future__ import annotations

import math

import numpy as np
import pytest

from kahlerlab.bergman import (
    BergmanKernel,
    InnerProductDiagonal,
    SectionSubspace,
    bergman_approximation,
    bergman_density_values,
    bergman_kernel,
    bergman_potential,
    eigenvalue_control_probe,
    monomial_section_norms,
    section_basis,
    weighted_section_norms,
)
from kahlerlab.geometry import ToricFanoModel, zero_potential
from kahlerlab.potentials import get_potential

CP1 = ToricFanoModel(1)
CP2 = ToricFanoModel(2)


# ---------------------------------------------------------------------------
# section bases and reference norms


def test_basis_sizes_match_lattice_counts():
    # dim H^0 of the m-th power is C(m(n+1)+n, n)
    assert section_basis(CP1, 1).size == 3
    assert section_basis(CP1, 2).size == 5
    assert section_basis(CP1, 4).size == 9
    assert section_basis(CP2, 1).size == 10
    assert section_basis(CP2, 2).size == 28


def test_cp1_monomial_norms_closed_form():
    # int e^{jt - G} det D^2 G dt = 2 B(j+1, 3-j) for G = 2 log(1+e^t), so
    # the norms at m = 1 are 4 pi B(j+1, 3-j): (4pi/3, 2pi/3, 4pi/3)
    norms = monomial_section_norms(CP1, 1)
    want = {
        (0,): 4.0 * math.pi / 3.0,
        (1,): 2.0 * math.pi / 3.0,
        (2,): 4.0 * math.pi / 3.0,
    }
    assert set(norms) == set(want)
    for j, v in want.items():
        assert norms[j] == pytest.approx(v, rel=1e-12)


def test_cp2_monomial_norm_symmetry():
    # the reference is symmetric under permuting the two torus factors
    norms = monomial_section_norms(CP2, 1)
    for (a, b), v in norms.items():
        assert v == pytest.approx(norms[(b, a)], rel=1e-11)


def test_section_basis_rejects_bad_m():
    with pytest.raises(ValueError):
        section_basis(CP1, 0)


# ---------------------------------------------------------------------------
# kernels


def test_full_kernel_is_constant_fubini_study():
    # the reference is Fubini-Study, whose full Bergman density is the
    # constant N/V (a balanced metric)
    for model, m in ((CP1, 1), (CP1, 3), (CP2, 1)):
        kern = bergman_kernel(model, m)
        nsec = kern.basis.size
        const = nsec / model.analytic_volume
        probe = np.linspace(-6, 6, 41)
        t = np.stack([probe] * model.n, axis=1)
        vals = kern.value(t)
        assert np.allclose(vals, const, rtol=1e-10)
        assert kern.is_invariant


def test_kernel_normalization_equals_dim():
    basis = section_basis(CP1, 2)
    sub = SectionSubspace.monomials(basis, [0, 2, 3])
    kern = BergmanKernel(sub)
    assert kern.normalization_integral() == pytest.approx(sub.dim, abs=1e-10)


def test_kernel_normalization_random_subspace():
    rng = np.random.default_rng(1)
    basis = section_basis(CP2, 1)
    coeffs = rng.normal(size=(basis.size, 4)) + 1j * rng.normal(size=(basis.size, 4))
    kern = BergmanKernel(SectionSubspace(basis=basis, coeffs=coeffs))
    assert kern.normalization_integral() == pytest.approx(4.0, abs=1e-9)


def test_kernel_monomial_subspace_decay():
    # span(1) on CP^1 has rho ~ |z|^{-4} at infinity: vanishing at t -> +inf
    basis = section_basis(CP1, 1)
    sub = SectionSubspace.from_exponents(basis, [(0,)])
    kern = BergmanKernel(sub)
    assert kern.value(np.array([[30.0]]))[0] < 1e-20
    assert kern.value(np.array([[-30.0]]))[0] == pytest.approx(
        1.0 / monomial_section_norms(CP1, 1)[(0,)], rel=1e-10
    )


def test_value_torus_matches_value_for_monomial_subspaces():
    basis = section_basis(CP1, 1)
    sub = SectionSubspace.monomials(basis, [0, 2])
    kern = BergmanKernel(sub)
    t = np.linspace(-4, 4, 9)[:, None]
    for theta0 in (0.0, 0.7, 2.4):
        theta = np.full_like(t, theta0)
        assert np.allclose(kern.value_torus(t, theta), kern.value(t), rtol=1e-12)


def test_value_torus_average_recovers_theta_average():
    # for non-monomial subspaces rho depends on theta; its uniform average
    # over a grid finer than the top frequency equals the closed-form average
    rng = np.random.default_rng(7)
    basis = section_basis(CP1, 1)
    coeffs = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
    kern = BergmanKernel(SectionSubspace(basis=basis, coeffs=coeffs))
    t = np.array([[0.8]])
    thetas = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    vals = [kern.value_torus(t, np.array([[th]]))[0] for th in thetas]
    assert np.mean(vals) == pytest.approx(kern.value(t)[0], rel=1e-12)


def test_kernel_rejects_degenerate_subspace():
    basis = section_basis(CP1, 1)
    c = np.zeros((3, 2))
    c[0, 0] = 1.0
    c[0, 1] = 1.0
    c[1, 1] = 1e-9  # two nearly parallel columns
    with pytest.raises(ArithmeticError):
        BergmanKernel(SectionSubspace(basis=basis, coeffs=c))


def test_kahler_defect_nonnegative_for_invariant_subspaces():
    basis = section_basis(CP2, 1)
    for idx in ([0, 3, 7], [1, 2], list(range(10))):
        kern = BergmanKernel(SectionSubspace.monomials(basis, idx))
        assert kern.kahler_defect() >= -1e-12


# ---------------------------------------------------------------------------
# potentials from inner products


def test_bergman_potential_reference_inner_product_is_constant():
    # diag = 1 in the reference-orthonormal basis reproduces log rho of the
    # full space, i.e. the constant log(N/V)
    basis = section_basis(CP1, 1)
    psi, model_l = bergman_potential(CP1, 1, InnerProductDiagonal(np.ones(basis.size)))
    assert model_l is CP1
    t = np.linspace(-8, 8, 33)[:, None]
    want = math.log(3.0 / (4.0 * math.pi))
    assert np.allclose(psi.value(t), want, atol=1e-10)
    assert np.allclose(psi.grad(t), 0.0, atol=1e-9)


def test_bergman_potential_rescales_model_for_higher_m():
    basis = section_basis(CP1, 2)
    psi, model_l = bergman_potential(CP1, 2, InnerProductDiagonal(np.ones(basis.size)))
    assert model_l.coefficient == pytest.approx(2 * CP1.coefficient)
    # softmax covariance form: D^2(ref + psi) is PSD everywhere
    t = np.linspace(-10, 10, 41)[:, None]
    total = model_l.base_hess(t) + psi.hess(t)
    assert np.min(total[:, 0, 0]) >= -1e-12


def test_bergman_potential_scaling_invariance():
    # a -> c a leaves psi unchanged up to the constant -log c
    basis = section_basis(CP1, 1)
    d = np.array([0.5, 2.0, 1.5])
    psi1, _ = bergman_potential(CP1, 1, InnerProductDiagonal(d))
    psi2, _ = bergman_potential(CP1, 1, InnerProductDiagonal(3.0 * d))
    t = np.linspace(-5, 5, 11)[:, None]
    diff = psi1.value(t) - psi2.value(t)
    assert np.allclose(diff, math.log(3.0), atol=1e-12)


def test_bergman_potential_validates_diag():
    with pytest.raises(ValueError):
        bergman_potential(CP1, 1, InnerProductDiagonal(np.ones(5)))
    with pytest.raises(ValueError):
        InnerProductDiagonal(np.array([1.0, -1.0, 1.0]))


# ---------------------------------------------------------------------------
# weighted Grams and approximation gaps


def test_weighted_norms_reduce_to_reference_at_zero():
    got = weighted_section_norms(CP1, 1, zero_potential(1))
    want = section_basis(CP1, 1).gram_diag
    assert np.allclose(got, want, rtol=1e-12)


def test_bergman_density_cp1_matches_kernel_at_zero():
    t = np.linspace(-5, 5, 21)[:, None]
    got = bergman_density_values(CP1, 1, zero_potential(1), t)
    kern = bergman_kernel(CP1, 1)
    assert np.allclose(got, kern.value(t), rtol=1e-11)


def test_approximation_gap_of_zero_potential_is_balanced_constant():
    # at phi = 0 all lambdas are 1 and the candidate is (1/m) log(N/V)
    res = bergman_approximation(CP1, 1, zero_potential(1))
    assert np.allclose(res["lambdas"], 1.0, rtol=1e-12)
    assert res["gap"] == pytest.approx(abs(math.log(3.0 / (4.0 * math.pi))), rel=1e-10)


def test_approximation_gap_shrinks_with_m():
    phi = get_potential(1, "gauss_plus")
    gap1 = bergman_approximation(CP1, 1, phi)["gap"]
    gap4 = bergman_approximation(CP1, 4, phi)["gap"]
    assert 0.0 < gap4 < gap1


def test_approximation_lambdas_sorted_and_positive():
    res = bergman_approximation(CP1, 2, get_potential(1, "lse_tilt"))
    lam = res["lambdas"]
    assert lam[0] == pytest.approx(1.0)
    assert np.all(np.diff(lam) <= 1e-15)
    assert np.all(lam > 0)
    assert np.all(res["H_diag"] > 0)


# ---------------------------------------------------------------------------
# eigenvalue-control probe


def test_probe_anchors_and_finiteness():
    res = eigenvalue_control_probe(CP1, 1, 2, n_rays=20, seed=3)
    recs = res["records"]
    assert len(recs) > 0
    smax = max(r["s"] for r in recs)
    assert smax >= 40.0
    for r in recs:
        assert np.isfinite(r["logratio"]) and np.isfinite(r["I"])
        assert r["I"] >= -1e-12
        if r["s"] == 0.0:
            assert abs(r["logratio"]) < 1e-12
            assert abs(r["I"]) < 1e-9
    fit = res["fitted"]
    assert np.isfinite(fit["lam"]) and np.isfinite(fit["C"])
    assert fit["lam"] >= 0.0


def test_probe_supplied_bound_violations_counted():
    res = eigenvalue_control_probe(
        CP1, 1, 2, n_rays=10, seed=3, supplied_bound=(1e6, 1e6)
    )
    assert res["supplied_violations"] == 0


def test_probe_rejects_bad_k():
    with pytest.raises(ValueError):
        eigenvalue_control_probe(CP1, 1, 5, n_rays=5)
    with pytest.raises(ValueError):
        eigenvalue_control_probe(CP2, 1, 1, n_rays=5)
