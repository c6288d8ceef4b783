"""Tests for the closed-form potential library."""

from __future__ import annotations

import numpy as np
import pytest

from kahlerlab.geometry import ToricFanoModel
from kahlerlab.potentials import (
    gaussian_potential,
    get_potential,
    grid_potential_from_csv,
    kahler_margin,
    library,
    library_names,
    moment_bump_potential,
    random_potential,
    weighted_lse_potential,
)

RNG = np.random.default_rng(411)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_library_names_stable(n):
    assert library_names(n) == [
        "bump_edge",
        "bump_moment",
        "bump_moment_neg",
        "gauss_minus",
        "gauss_off",
        "gauss_plus",
        "lse_minus",
        "lse_plus",
        "lse_tilt",
    ]


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("name", library_names(1))
def test_library_derivatives_consistent(n, name):
    phi = get_potential(n, name)
    pts = RNG.uniform(-4, 4, size=(10, n))
    h = 1e-5
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        dval = (phi.value(pts + step) - phi.value(pts - step)) / (2 * h)
        assert np.allclose(dval, phi.grad(pts)[:, i], rtol=2e-6, atol=1e-8)
        dgrad = (phi.grad(pts + step) - phi.grad(pts - step)) / (2 * h)
        assert np.allclose(dgrad, phi.hess(pts)[:, :, i], rtol=2e-5, atol=1e-7)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_library_entries_keep_reference_kahler(n):
    model = ToricFanoModel(n)
    for name, phi in library(n).items():
        margin = kahler_margin(model, phi)
        assert margin > 0.05, f"{name} destroys the Kahler form (margin {margin})"


@pytest.mark.parametrize("n", [1, 2, 3])
def test_library_entries_bounded(n):
    # library potentials are uniformly bounded, so all the energy integrands
    # stay integrable against the reference measure
    wide = RNG.uniform(-30, 30, size=(400, n))
    for name, phi in library(n).items():
        assert np.max(np.abs(phi.value(wide))) < 5.0, name


def test_weighted_lse_is_bounded_by_log_weight_span():
    n = 2
    w = [1.0, 3.0, 0.5]
    phi = weighted_lse_potential(n, w, 0.7, "test")
    wide = RNG.uniform(-40, 40, size=(500, n))
    bound = 0.7 * np.max(np.abs(np.log(w)))
    assert np.max(np.abs(phi.value(wide))) <= bound + 1e-12


def test_weighted_lse_rejects_bad_weight_count():
    with pytest.raises(ValueError):
        weighted_lse_potential(2, [1.0, 2.0], 0.5, "bad")


def test_gaussian_potential_peak_and_decay():
    phi = gaussian_potential(2, [0.5, -0.3], 1.5, 0.12, "g")
    at_peak = phi.value(np.array([[0.5, -0.3]]))[0]
    assert at_peak == pytest.approx(0.12, rel=1e-14)
    far = phi.value(np.array([[20.0, 20.0]]))[0]
    assert abs(far) < 1e-50
    assert np.allclose(phi.grad(np.array([[0.5, -0.3]])), 0.0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_moment_bump_sup_equals_amplitude(n):
    amp = 0.25
    phi = moment_bump_potential(n, [1] * n, amp, "b")
    model = ToricFanoModel(n)
    vals = phi.value(model.quad_t)
    assert np.max(np.abs(vals)) <= amp + 1e-12
    # the normalized bump attains its sup at the interior stationary point
    c = float(n + 1)
    xstar = np.full((1, n), c / (n + 1.0))
    tstar = model.inverse_moment_map(xstar)
    assert phi.value(tstar)[0] == pytest.approx(amp, rel=1e-12)


def test_get_potential_zero_and_unknown():
    assert get_potential(2, "zero").name == "zero"
    with pytest.raises(KeyError):
        get_potential(2, "nonexistent")


def test_random_potential_is_seeded_and_kahler():
    model = ToricFanoModel(2)
    a = random_potential(model, np.random.default_rng(5))
    b = random_potential(model, np.random.default_rng(5))
    c = random_potential(model, np.random.default_rng(6))
    t = RNG.uniform(-3, 3, size=(20, 2))
    assert np.array_equal(a.value(t), b.value(t))
    assert not np.array_equal(a.value(t), c.value(t))
    assert kahler_margin(model, a) > 0.0


def test_random_potential_amplitude_scales_sup():
    model = ToricFanoModel(1)
    small = random_potential(model, np.random.default_rng(3), amplitude=0.01)
    vals = small.value(model.quad_t)
    assert np.max(np.abs(vals)) <= 0.011


# ---------------------------------------------------------------------------
# grid-sampled potentials


def test_grid_potential_roundtrip_1d(tmp_path):
    tg = np.linspace(-6, 6, 241)
    vg = 0.3 * np.exp(-(tg**2) / 4.0)
    path = tmp_path / "phi.csv"
    lines = ["t,phi"] + [f"{a},{b}" for a, b in zip(tg, vg)]
    path.write_text("\n".join(lines) + "\n")
    phi = grid_potential_from_csv(str(path), 1)
    probe = np.linspace(-5.5, 5.5, 50)[:, None]
    want = 0.3 * np.exp(-(probe[:, 0] ** 2) / 4.0)
    assert np.allclose(phi.value(probe), want, atol=1e-6)
    # clamped outside the sampled box
    outside = np.array([[40.0]])
    assert phi.value(outside)[0] == pytest.approx(vg[-1], abs=1e-12)
    assert phi.grad(outside)[0, 0] == 0.0
    assert phi.hess(outside)[0, 0, 0] == 0.0


def test_grid_potential_roundtrip_2d(tmp_path):
    t1 = np.linspace(-5, 5, 81)
    t2 = np.linspace(-5, 5, 81)
    rows = ["t1,t2,phi"]
    for a in t1:
        for b in t2:
            rows.append(f"{a},{b},{0.1 * np.exp(-(a * a + b * b) / 5.0)}")
    path = tmp_path / "phi2.csv"
    path.write_text("\n".join(rows) + "\n")
    phi = grid_potential_from_csv(str(path), 2)
    probe = RNG.uniform(-4, 4, size=(40, 2))
    want = 0.1 * np.exp(-np.sum(probe**2, axis=1) / 5.0)
    assert np.allclose(phi.value(probe), want, atol=1e-5)


def test_grid_potential_rejects_wrong_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,phi\n0.0,1.0\n")
    with pytest.raises(ValueError):
        grid_potential_from_csv(str(path), 2)
