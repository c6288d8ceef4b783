"""Tests for the Monge-Ampere continuation path and its tracked estimates.

The n = 2 solver has an intrinsic O(h^2) compatibility defect at t = 0 from
the nine-point determinant discretization; the tolerances below are the
levels measured on the shipped mesh (221 nodes per axis) with margin, not
aspirational values.  The n = 1 solver is structurally exact at t = 0 and
gets the tight invariants.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from kahlerlab.continuity import (
    ContinuityError,
    Solver1D,
    Solver2D,
    jensen_slack,
    make_solver,
    ricci_identity_residual,
    ricci_potential,
    run_path,
    solve_ma,
    verify_apriori_estimates,
    verify_path_identity,
)
from kahlerlab.functionals import aubin_energies
from kahlerlab.geometry import ToricFanoModel
from kahlerlab.potentials import get_potential

PERT1 = ToricFanoModel(1, perturbation=get_potential(1, "gauss_plus"))
PERT2 = ToricFanoModel(2, perturbation=get_potential(2, "gauss_plus"))


@pytest.fixture(scope="module")
def path1():
    return run_path(PERT1, dt=0.05)


@pytest.fixture(scope="module")
def path2():
    return run_path(PERT2, dt=0.1, tol=1e-10)


# ---------------------------------------------------------------------------
# Ricci potential


def test_ricci_potential_vanishes_unperturbed():
    for n in (1, 2):
        model = ToricFanoModel(n)
        data = ricci_potential(model)
        t = model.quad_t[:50]
        assert np.max(np.abs(data.value(t))) < 1e-12
        assert data.mass_defect() < 1e-12


@pytest.mark.parametrize("model", [PERT1, PERT2], ids=["n1", "n2"])
def test_ricci_potential_normalized(model):
    data = ricci_potential(model)
    assert data.mass_defect() < 1e-10


@pytest.mark.parametrize("model", [PERT1, PERT2], ids=["n1", "n2"])
def test_ricci_identity_finite_difference(model):
    # f must reproduce -log det relative to the reference, up to a constant;
    # checked through second differences so the constant drops out
    assert ricci_identity_residual(model) < 1e-6


# ---------------------------------------------------------------------------
# single solves, n = 1


def test_solver1d_requires_dim_one():
    with pytest.raises(ValueError):
        Solver1D(PERT2)


def test_solver1d_t0_exactly_compatible():
    solver = Solver1D(PERT1)
    sol = solver.solve(0.0)
    assert sol.residual < 1e-10
    assert abs(sol.pinned_defect) < 1e-9  # discrete compatibility is exact
    assert sol.mass_residual < 1e-10
    assert sol.iterations <= 3  # the t = 0 problem is linear in phi''


def test_solver1d_gauge_at_t0():
    # int phi e^f omega^n = 0 fixes the additive constant
    solver = Solver1D(PERT1)
    sol = solver.solve(0.0)
    w = np.exp(solver.f) * solver.gpp
    gauge = float(np.sum(w * sol.phi_grid) / np.sum(w))
    assert abs(gauge) < 1e-12


def test_solver1d_warm_start_matches_direct():
    solver = Solver1D(PERT1)
    warm0 = solver.solve(0.3)
    warm = solver.solve(0.5, phi0=warm0.phi_grid)
    cold = solver.solve(0.5)
    assert np.max(np.abs(warm.phi_grid - cold.phi_grid)) < 1e-8


def test_solver1d_linearization_error_quarters():
    # the first Newton correction differs from the true solution by O(f^2);
    # scaling the perturbation by 1/2 must divide that gap by ~4 (small
    # amplitudes keep the cubic term from dragging the ratio down)
    errs = []
    for amp in (0.2, 0.1):
        model = ToricFanoModel(1, perturbation=get_potential(1, "gauss_plus").scaled(amp))
        solver = Solver1D(model)
        lin = solver.linearized_solution()
        sol = solver.solve(0.0)
        errs.append(float(np.max(np.abs(sol.phi_grid - lin))))
    ratio = errs[0] / errs[1]
    assert 3.2 < ratio < 4.6


def test_solver1d_mesh_refinement_stable():
    coarse = Solver1D(PERT1)
    fine = Solver1D(PERT1, nodes=2 * coarse.mesh.size)
    a = coarse.solve(0.5)
    b = fine.solve(0.5)
    sup_a = float(np.max(np.abs(a.phi_grid)))
    sup_b = float(np.max(np.abs(b.phi_grid)))
    assert abs(sup_a - sup_b) < 1e-5 * max(sup_a, 1.0)


def test_solve_ma_pointwise_identity():
    # the converged grid satisfies det D^2(G+phi) = e^{f - t phi} det D^2 G
    # at collocation accuracy, restated as the solver residual
    solver = Solver1D(PERT1)
    sol = solve_ma(PERT1, 0.4, solver=solver)
    r, w = solver._residual(0.4, sol.phi_grid)
    assert float(np.max(np.abs(r[1:-1]))) < 5e-10


# ---------------------------------------------------------------------------
# single solves, n = 2


def test_solver2d_requires_dim_two():
    with pytest.raises(ValueError):
        Solver2D(PERT1)
    with pytest.raises(ValueError):
        make_solver(ToricFanoModel(3, nodes_per_axis=24))


def test_solver2d_t0_known_defect_level():
    # the pinned row carries the O(h^2) compatibility defect of the 9-point
    # determinant form; measured 3.5e-2 (pin) and 7.0e-4 (mass) at h = 0.3
    solver = Solver2D(PERT2)
    sol = solver.solve(0.0, tol=1e-10)
    assert sol.residual < 1e-10
    assert abs(sol.pinned_defect) < 0.1
    assert sol.mass_residual < 5e-3


def test_solver2d_positive_t_mass_tight():
    solver = Solver2D(PERT2)
    sol = solver.solve(0.5, tol=1e-10)
    assert sol.residual < 1e-10
    assert sol.mass_residual < 1e-8
    assert sol.pinned_defect == 0.0  # no pinning away from t = 0


def test_solver2d_warm_start_agrees_in_bulk():
    # ring nodes (det ~ active floor) are weakly determined; agreement is
    # asserted where the equation has weight, and on the energies
    solver = Solver2D(PERT2)
    warm0 = solver.solve(0.3, tol=1e-10)
    warm = solver.solve(0.5, phi0=warm0.phi_grid, tol=1e-10)
    cold = solver.solve(0.5, tol=1e-10)
    bulk = solver.det_g > 1e-2
    gap_bulk = float(np.max(np.abs(warm.phi_grid[bulk] - cold.phi_grid[bulk])))
    assert gap_bulk < 1e-5
    e_warm = aubin_energies(PERT2, warm.potential)
    e_cold = aubin_energies(PERT2, cold.potential)
    assert e_warm["I"] == pytest.approx(e_cold["I"], rel=1e-6)
    assert e_warm["J"] == pytest.approx(e_cold["J"], rel=1e-6)


def test_solver2d_linearization_error_quarters():
    base = ToricFanoModel(2, perturbation=get_potential(2, "gauss_plus"))
    half = ToricFanoModel(2, perturbation=get_potential(2, "gauss_plus").scaled(0.5))
    errs = []
    for model in (base, half):
        solver = Solver2D(model)
        lin = solver.linearized_solution()
        sol = solver.solve(0.0, tol=1e-10)
        act = solver.active
        errs.append(float(np.max(np.abs((sol.phi_grid - lin)[act]))))
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.5


def test_solver2d_mesh_refinement_consistent():
    # h = 0.3 vs h = 0.2: sup phi moves at the measured O(h^2) level
    coarse = Solver2D(PERT2)
    fine = Solver2D(PERT2, nodes=331)
    a = coarse.solve(0.5, tol=1e-10)
    b = fine.solve(0.5, tol=1e-10)
    sup_a = float(np.max(np.abs(a.phi_grid[coarse.active])))
    sup_b = float(np.max(np.abs(b.phi_grid[fine.active])))
    assert abs(sup_a - sup_b) / sup_a < 2e-2


# ---------------------------------------------------------------------------
# trivial paths


@pytest.mark.parametrize("n", [1, 2])
def test_trivial_path_is_identically_zero(n):
    model = ToricFanoModel(n)
    path = run_path(model, dt=0.25)
    assert path.completed
    for state in path.states:
        assert state.sup_phi <= 1e-10
        assert state.energies["I"] <= 1e-12


# ---------------------------------------------------------------------------
# perturbed path, n = 1


def test_path1_completes_with_tight_residuals(path1):
    assert path1.completed and path1.failure is None
    assert path1.edge_t == pytest.approx(0.95)
    assert len(path1.states) == 20
    assert max(s.residual for s in path1.states) < 1e-10
    assert max(s.mass_residual for s in path1.states) < 1e-8


def test_path1_energies_monotone_and_ordered(path1):
    inner = [s for s in path1.states if s.t > 0]
    i_vals = [s.energies["I"] for s in inner]
    assert all(v >= 0 for v in i_vals)
    assert all(b >= a - 1e-12 for a, b in zip(i_vals, i_vals[1:]))
    for s in inner:
        assert s.energies["i_minus_j"] >= -1e-12
        assert s.energies["dominance"] >= -1e-10
        assert s.sup_phi >= -1e-12


def test_path1_identity_residual_small(path1):
    res = verify_path_identity(path1)
    assert res["max_relative_residual"] < 1e-3


def test_path1_identity_refines_with_dt():
    # the t-quadrature error of int [I-J] ds dominates; halving dt must cut
    # the final residual by at least ~3x (second-order trapezoid)
    coarse = run_path(PERT1, dt=0.1)
    fine = run_path(PERT1, dt=0.05)
    r_coarse = verify_path_identity(coarse)["final_relative_residual"]
    r_fine = verify_path_identity(fine)["final_relative_residual"]
    assert r_coarse / r_fine > 3.0


def test_path1_apriori_estimates(path1):
    est = verify_apriori_estimates(PERT1, path1, k=2, alpha_one=0.5, alpha_k=0.9)
    assert est["max_residual"] < 1e-10
    assert np.all(est["apriori_slack"] >= -1e-6)
    assert np.all(est["jensen_slack"] >= -1e-12)
    assert np.all(np.isfinite(est["bound_profile_k"]))
    assert np.all(np.isfinite(est["bound_profile_k1"]))


def test_path1_min_rho_positive_and_stable(path1):
    rhos = [s.min_rho for s in path1.states]
    assert min(rhos) > 0.0
    assert path1.partial_c0_constant == pytest.approx(min(rhos))


def test_jensen_slack_validates_alpha(path1):
    with pytest.raises(ValueError):
        jensen_slack(PERT1, path1.states[-1], 1.0)


def test_path_rejects_bad_grid():
    with pytest.raises(ValueError):
        run_path(PERT1, t_grid=[0.1, 0.2])
    with pytest.raises(ValueError):
        run_path(PERT1, t_grid=[0.0, 0.2, 0.2])


def test_verify_path_identity_needs_states(path1):
    with pytest.raises(ValueError):
        verify_path_identity(path1.states[:1])


# ---------------------------------------------------------------------------
# perturbed path, n = 2


def test_path2_completes_with_tight_residuals(path2):
    assert path2.completed and path2.failure is None
    assert path2.edge_t == pytest.approx(0.95)
    assert max(s.residual for s in path2.states) < 1e-10
    # t = 0 carries the O(h^2) compatibility defect; t > 0 states are tight
    assert path2.states[0].mass_residual < 5e-3
    assert max(s.mass_residual for s in path2.states[1:]) < 1e-8


def test_path2_identity_at_spatial_floor(path2):
    # residual * t is a t-independent spatial O(h^2) error (measured 6.9e-4
    # uniformly along the path, and insensitive to dt); the identity holds
    # only to that floor divided by t, so it is asserted in this form
    res = verify_path_identity(path2)
    floor = np.abs(res["residual"] * res["t"])
    assert float(np.max(floor)) < 2e-3
    assert float(np.max(floor) - np.min(floor)) < 1e-3  # flat, not accumulating


def test_path2_apriori_estimates(path2):
    est = verify_apriori_estimates(PERT2, path2, k=2, alpha_one=0.4, alpha_k=0.8)
    assert est["max_residual"] < 1e-10
    assert np.all(est["apriori_slack"] >= -1e-6)
    assert np.all(est["jensen_slack"] >= -1e-12)


def test_path2_min_rho_positive(path2):
    assert path2.partial_c0_constant > 0.0


def test_path2_energies_ordered(path2):
    for s in path2.states:
        if s.t == 0.0:
            continue
        assert s.energies["i_minus_j"] >= -1e-10
        assert s.energies["dominance"] >= -1e-10


# ---------------------------------------------------------------------------
# failure reporting


def test_failed_path_reports_edge():
    # an unreachable tolerance forces ContinuityError at the first t; the
    # result keeps completed=False with an explanatory failure message
    model = ToricFanoModel(1)
    path = run_path(
        PERT1, t_grid=[0.0, 0.5], tol=1e-16, max_halvings=0
    )
    del model
    if path.completed:  # pragma: no cover - tolerance reachable on this mesh
        pytest.skip("mesh reached 1e-16; cannot exercise failure path here")
    assert path.failure is not None
    assert "stopped" in path.failure
    if path.states:
        assert path.edge_t == pytest.approx(0.0)
        assert math.isfinite(path.partial_c0_constant)
    else:
        assert path.edge_t is None
