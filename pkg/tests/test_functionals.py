"""Tests for the energy functionals I_k, I, J and their identities."""

from __future__ import annotations

import numpy as np
import pytest

from kahlerlab.functionals import (
    aubin_energies,
    constant_shift_cancellation,
    dirichlet_term,
    dirichlet_term_gradient,
    energy_ik,
    functional_report,
    verify_difference_expansion,
    verify_energy_difference_expansion,
    verify_ik_stability,
)
from kahlerlab.geometry import ToricFanoModel, zero_potential
from kahlerlab.potentials import get_potential, library_names, random_potential

MODELS = {n: ToricFanoModel(n) for n in (1, 2)}
MODEL3 = ToricFanoModel(3, nodes_per_axis=24)


def model_for(n: int) -> ToricFanoModel:
    return MODEL3 if n == 3 else MODELS[n]


# ---------------------------------------------------------------------------
# Dirichlet-type terms


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dirichlet_terms_nonnegative(n):
    model = model_for(n)
    for name in library_names(n)[:4] if n == 3 else library_names(n):
        phi = get_potential(n, name)
        for r in range(n):
            assert dirichlet_term(model, phi, r) >= 0.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dirichlet_term_two_routes_agree(n):
    # value-based Stokes form against the gradient-contraction form; these
    # share no intermediate quantities, so agreement validates both
    model = model_for(n)
    names = library_names(n)[:3] if n == 3 else library_names(n)
    for name in names:
        phi = get_potential(n, name)
        for r in range(n):
            a = dirichlet_term(model, phi, r)
            b = dirichlet_term_gradient(model, phi, r)
            # agreement is quadrature-limited; the absolute term covers
            # mean-heavy potentials whose recentered Stokes form picks up
            # the wedge-volume quadrature mismatch on a small denominator
            assert a == pytest.approx(b, rel=2e-6, abs=5e-7), (name, r)


def test_dirichlet_term_zero_potential():
    for n in (1, 2):
        model = model_for(n)
        assert dirichlet_term(model, zero_potential(n), 0) == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------------------
# I_k routes, monotonicity, stability


@pytest.mark.parametrize("n", [1, 2, 3])
def test_energy_ik_routes_telescope_exactly(n):
    # the sum route telescopes the difference route pointwise before
    # quadrature, so the two agree to rounding, not merely to quadrature
    model = model_for(n)
    names = library_names(n)[:3] if n == 3 else library_names(n)
    for name in names:
        phi = get_potential(n, name)
        for k in range(2, n + 2):
            a = energy_ik(model, phi, k, form="difference")
            b = energy_ik(model, phi, k, form="sum")
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12), (name, k)


def test_energy_ik_rejects_bad_k_and_form():
    model = MODELS[1]
    phi = get_potential(1, "gauss_plus")
    with pytest.raises(ValueError):
        energy_ik(model, phi, 1)
    with pytest.raises(ValueError):
        energy_ik(model, phi, 4)  # k > n+1
    with pytest.raises(ValueError):
        energy_ik(model, phi, 2, form="bogus")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_energy_ik_nonnegative_and_monotone_in_k(n):
    # I_k = sum_{r<k-1} b_r with b_r >= 0, so I_2 <= I_3 <= ... <= I_{n+1}
    model = model_for(n)
    phi = get_potential(n, "lse_tilt")
    vals = [energy_ik(model, phi, k) for k in range(2, n + 2)]
    assert all(v >= 0.0 for v in vals)
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


def test_energy_i2_is_first_dirichlet_term():
    for n in (1, 2):
        model = model_for(n)
        phi = get_potential(n, "gauss_minus")
        assert energy_ik(model, phi, 2, form="sum") == pytest.approx(
            dirichlet_term(model, phi, 0), rel=1e-12, abs=1e-14
        )


@pytest.mark.parametrize("n", [1, 2])
def test_ik_lipschitz_stability_random_pairs(n):
    model = model_for(n)
    rng = np.random.default_rng(99)
    for _ in range(5):
        phi = random_potential(model, rng)
        psi = random_potential(model, rng)
        for k in range(2, n + 2):
            res = verify_ik_stability(model, phi, psi, k)
            assert res["slack"] >= -1e-9, (n, k, res)


def test_constant_shift_cancellation_identically_zero():
    for k in range(2, 60):
        assert constant_shift_cancellation(k) == 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_energies_invariant_under_constant_shift(n):
    # exact at node level thanks to the recentering inside the Stokes forms
    model = model_for(n)
    phi = get_potential(n, "gauss_plus")
    shifted = phi.shifted(-1.3)
    for k in range(2, n + 2):
        for form in ("difference", "sum"):
            a = energy_ik(model, phi, k, form=form)
            b = energy_ik(model, shifted, k, form=form)
            assert abs(a - b) < 1e-12, (k, form)


# ---------------------------------------------------------------------------
# I, J and the inequalities that order them


@pytest.mark.parametrize("n", [1, 2, 3])
def test_aubin_energy_inequalities(n):
    model = model_for(n)
    names = library_names(n)[:4] if n == 3 else library_names(n)
    for name in names:
        en = aubin_energies(model, get_potential(n, name))
        assert en["I"] >= -1e-12, name
        assert en["J"] >= -1e-12, name
        assert en["i_minus_j"] >= -1e-10, name
        assert en["dominance"] >= -1e-10, name  # (n+1) J - I


@pytest.mark.parametrize("n", [1, 2, 3])
def test_aubin_i_equals_top_ik(n):
    model = model_for(n)
    phi = get_potential(n, "bump_moment")
    en = aubin_energies(model, phi)
    assert en["I"] == pytest.approx(energy_ik(model, phi, n + 1), rel=1e-9, abs=1e-11)
    assert en["I_sum"] == pytest.approx(en["I"], rel=1e-8, abs=1e-10)


def test_aubin_energies_zero_potential():
    en = aubin_energies(MODELS[2], zero_potential(2))
    for key in ("I", "J", "i_minus_j", "dominance"):
        assert en[key] == pytest.approx(0.0, abs=1e-14)


# ---------------------------------------------------------------------------
# expansion identities (quadrature-level checks of the exact algebra)


@pytest.mark.parametrize("n", [1, 2])
def test_difference_expansion_identity(n):
    model = model_for(n)
    phi = get_potential(n, "gauss_plus")
    psi = get_potential(n, "lse_minus")
    for r in range(0, n + 1):
        res = verify_difference_expansion(model, phi, psi, r)
        assert abs(res["residual"]) < 1e-6, res


def test_difference_expansion_r0_trivial():
    # r = 0 reduces to the same integral on both sides
    model = MODELS[1]
    phi = get_potential(1, "gauss_plus")
    res = verify_difference_expansion(model, phi, zero_potential(1), 0)
    assert res["residual"] == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_energy_difference_expansion_identity(n):
    model = model_for(n)
    phi = get_potential(n, "bump_edge")
    psi = get_potential(n, "gauss_off")
    for k in range(2, n + 2):
        res = verify_energy_difference_expansion(model, phi, psi, k)
        assert abs(res["residual"]) < 1e-7, res
        assert res["correction_exponent"] == n - k + 2


def test_energy_difference_expansion_n3_spot():
    res = verify_energy_difference_expansion(
        MODEL3, get_potential(3, "gauss_plus"), get_potential(3, "lse_plus"), 3
    )
    assert abs(res["residual"]) < 1e-4


def test_expansion_rejects_bad_indices():
    model = MODELS[2]
    phi = get_potential(2, "gauss_plus")
    with pytest.raises(ValueError):
        verify_difference_expansion(model, phi, phi, 3)
    with pytest.raises(ValueError):
        verify_energy_difference_expansion(model, phi, phi, 5)


# ---------------------------------------------------------------------------
# report plumbing


def test_functional_report_round_trip():
    model = MODELS[1]
    rep = functional_report(model, get_potential(1, "gauss_plus"))
    d = rep.to_dict()
    assert d["n"] == 1
    assert d["potential"] == "gauss_plus"
    assert set(rep.ik_difference) == {2}
    assert rep.ik_route_residual[2] < 1e-12
    assert rep.expansion_residuals["psi"] == "zero"
    for v in rep.expansion_residuals["difference_expansion_by_r"].values():
        assert abs(v) < 1e-7
