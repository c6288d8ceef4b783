"""Aubin continuity path on toric Fano models.

The continuity family deforms the reference metric toward a Kahler-Einstein
one:

    Ric(omega_phi) = t omega_phi + (1 - t) omega,  omega_phi = omega + i ddbar phi.

In invariant log coordinates this is the real Monge-Ampere equation

    det D^2(G + phi) = e^{f - t phi} det D^2 G,

where G is the reference potential and f its Ricci potential, normalized by
int e^f omega^n = V.  Newton continuation in t produces a family of states
carrying the tracked energies, the minimum of the Bergman density, and the
accumulated int_0^t [I - J] ds used by the path identity

    -(1/t) int_0^t [I(phi_s) - J(phi_s)] ds = J(phi_t) - avg int phi_t omega^n.

At t = 0 solutions are unique only up to a constant, fixed by
int phi_0 e^f omega^n = 0 (the t -> 0 limit of the automatic normalization
int e^{t phi} omega_phi^n = V).  Solvers are provided for n = 1 (collocation
ODE on a symmetric interval) and n = 2 (finite differences on a truncated
box); both use asymptotically-linear boundary conditions for G + phi, i.e.
homogeneous Neumann conditions for phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.linalg import solve_banded
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .bergman import bergman_density_values
from .functionals import aubin_energies, energy_ik
from .geometry import InvariantPotential, ToricFanoModel, _det_stack, wedge_density

__all__ = [
    "DEFAULT_DELTA",
    "DEFAULT_TOL",
    "ContinuityError",
    "ContinuityState",
    "MASolution",
    "PathResult",
    "RicciPotentialData",
    "Solver1D",
    "Solver2D",
    "make_solver",
    "ricci_identity_residual",
    "ricci_potential",
    "run_path",
    "solve_ma",
    "verify_apriori_estimates",
    "verify_path_identity",
]

DEFAULT_TOL = 1e-10
DEFAULT_DELTA = 0.05


class ContinuityError(RuntimeError):
    """Newton divergence or Kahler-cone exit during continuation."""


# ---------------------------------------------------------------------------
# Ricci potential


@dataclass
class RicciPotentialData:
    """Normalized Ricci potential f of the reference metric.

    f solves i ddbar f = Ric(omega) - omega with int e^f omega^n = V.  In log
    coordinates

        f = -log det D^2(F + chi) + log det D^2 F - chi + const,

    using that the unperturbed reference is Einstein.  For chi = 0 the value
    is identically zero.
    """

    model: ToricFanoModel
    constant: float
    value: Callable[[np.ndarray], np.ndarray]

    def mass_defect(self) -> float:
        """|int e^f omega^n - V| / V for the normalization check."""
        model = self.model
        t = model.quad_t
        dens = wedge_density([model.ref_hess(t)], [model.n])
        mass = model.integrate_invariant(np.exp(self.value(t)) * dens)
        return abs(mass - model.volume) / model.volume


def _base_log_det(model: ToricFanoModel, t: np.ndarray) -> np.ndarray:
    """log det D^2 F for the log-sum-exp part, in closed form."""
    c, n = model.coefficient, model.n
    return n * math.log(c) + t.sum(axis=1) - (n + 1) / c * model.base_value(t)


def ricci_potential(model: ToricFanoModel) -> RicciPotentialData:
    """Ricci potential of the reference metric, normalized to unit mass."""
    if model.perturbation is None:

        def zero(t: np.ndarray) -> np.ndarray:
            return np.zeros(np.atleast_2d(t).shape[0])

        return RicciPotentialData(model, 0.0, zero)

    chi = model.perturbation

    def raw(t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        log_det_ref = np.log(_det_stack(model.ref_hess(t)))
        return -log_det_ref + _base_log_det(model, t) - chi.value(t)

    t = model.quad_t
    dens = wedge_density([model.ref_hess(t)], [model.n])
    mass = model.integrate_invariant(np.exp(raw(t)) * dens)
    if not mass > 0:
        raise ValueError("reference potential is not Kahler on the quadrature grid")
    const = math.log(model.volume / mass)

    def value(t: np.ndarray) -> np.ndarray:
        return raw(t) + const

    return RicciPotentialData(model, const, value)


def _fd_hessian(fun: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, step: float) -> np.ndarray:
    """Central-difference Hessian of a scalar function of t, shape (M, n, n)."""
    pts = np.atleast_2d(pts)
    m, n = pts.shape
    out = np.empty((m, n, n))
    f0 = fun(pts)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        out[:, i, i] = (fun(pts + ei) - 2.0 * f0 + fun(pts - ei)) / step**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = step
            mixed = (
                fun(pts + ei + ej) - fun(pts + ei - ej) - fun(pts - ei + ej) + fun(pts - ei - ej)
            ) / (4.0 * step**2)
            out[:, i, j] = mixed
            out[:, j, i] = mixed
    return out


def ricci_identity_residual(
    model: ToricFanoModel,
    data: RicciPotentialData | None = None,
    points: np.ndarray | None = None,
    step: float = 1e-4,
) -> float:
    """sup |D^2 f + D^2 log det D^2 G + D^2 G| at sample log points.

    This is the coordinate form of i ddbar f = Ric(omega) - omega; both
    Hessians are taken by central differences, so the residual is limited by
    the O(step^2) truncation of the stencil.
    """
    if data is None:
        data = ricci_potential(model)
    if points is None:
        t = model.quad_t
        points = t[:: max(1, len(t) // 24)][:24]
    points = np.atleast_2d(points)

    def log_det(t: np.ndarray) -> np.ndarray:
        return np.log(_det_stack(model.ref_hess(t)))

    target = _fd_hessian(data.value, points, step) + _fd_hessian(log_det, points, step)
    return float(np.max(np.abs(target + model.ref_hess(points))))


# ---------------------------------------------------------------------------
# Monge-Ampere solvers


@dataclass
class MASolution:
    """One converged Monge-Ampere solve.

    Attributes:
        t: continuity parameter.
        phi_grid: potential values on the solver mesh.
        residual: sup norm of det D^2(G+phi) - e^{f-t phi} det D^2 G over the
            collocation nodes (the pinned gauge row at t = 0 is excluded).
        pinned_defect: equation residual at the pinned node (t = 0 only).
        iterations: Newton iterations used.
        mass_residual: |int e^{t phi} omega_phi^n - V| / V on the mesh.
        potential: spline-backed InvariantPotential for off-mesh evaluation.
    """

    t: float
    phi_grid: np.ndarray
    residual: float
    pinned_defect: float
    iterations: int
    mass_residual: float
    potential: InvariantPotential


class Solver1D:
    """Damped Newton for the n = 1 equation on a symmetric interval.

    The residual is the Monge-Ampere form R = phi'' - (e^{f - t phi} - 1) G''
    with homogeneous Neumann rows at both ends; the interval is wide enough
    that det D^2 G < 1e-14 outside.  At t = 0 the center value is pinned
    during Newton and the additive constant is restored afterwards from
    int phi e^f omega^n = 0.
    """

    def __init__(
        self,
        model: ToricFanoModel,
        ricci: RicciPotentialData | None = None,
        halfwidth: float = 35.0,
        nodes: int = 16384,
    ):
        if model.n != 1:
            raise ValueError("Solver1D requires a one-dimensional model")
        self.model = model
        self.ricci = ricci if ricci is not None else ricci_potential(model)
        self.mesh = np.linspace(-halfwidth, halfwidth, nodes)
        self.h = float(self.mesh[1] - self.mesh[0])
        pts = self.mesh[:, None]
        self.gpp = model.ref_hess(pts)[:, 0, 0]
        f = self.ricci.value(pts)
        # Recenter on the mesh so the discrete t = 0 problem is compatible:
        # summing the interior rows telescopes phi'' away, which forces
        # sum (e^f - 1) G'' = 0 over interior nodes.
        num = float(np.sum(self.gpp[1:-1]))
        den = float(np.sum(np.exp(f[1:-1]) * self.gpp[1:-1]))
        self.kappa = math.log(num / den)
        self.f = f + self.kappa
        self.center = nodes // 2
        # Reference volume on the same mesh; the trapezoid is near-exact for
        # the decaying analytic integrand, so the mass check is not polluted
        # by the error of the model's moment-coordinate quadrature.
        self.volume_mesh = 2.0 * math.pi * self.h * num

    def _f_at(self, t: np.ndarray) -> np.ndarray:
        return self.ricci.value(t) + self.kappa

    def _residual(self, tpar: float, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = np.exp(self.f - tpar * phi)
        r = np.empty_like(phi)
        r[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / self.h**2 - (w[1:-1] - 1.0) * self.gpp[1:-1]
        r[0] = phi[1] - phi[0]
        r[-1] = phi[-1] - phi[-2]
        if tpar == 0.0:
            r[self.center] = phi[self.center]
        return r, w

    def _newton_delta(self, tpar: float, w: np.ndarray, r: np.ndarray) -> np.ndarray:
        n = w.size
        ab = np.zeros((3, n))
        ab[0, 2:] = 1.0 / self.h**2
        ab[2, :-2] = 1.0 / self.h**2
        ab[1, 1:-1] = -2.0 / self.h**2 + tpar * w[1:-1] * self.gpp[1:-1]
        ab[1, 0] = -1.0
        ab[0, 1] = 1.0
        ab[1, -1] = 1.0
        ab[2, -2] = -1.0
        if tpar == 0.0:
            c = self.center
            ab[1, c] = 1.0
            ab[0, c + 1] = 0.0
            ab[2, c - 1] = 0.0
        return solve_banded((1, 1), ab, r)

    def _mass_shift(self, phi: np.ndarray) -> np.ndarray:
        weight = np.exp(self.f[1:-1]) * self.gpp[1:-1]
        return phi - float(np.dot(weight, phi[1:-1]) / np.sum(weight))

    def _mass_residual(self, tpar: float, phi: np.ndarray) -> float:
        wpp = self.gpp[1:-1] + (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / self.h**2
        mass = 2.0 * math.pi * self.h * float(np.sum(np.exp(tpar * phi[1:-1]) * wpp))
        return abs(mass - self.volume_mesh) / self.volume_mesh

    def solve(
        self,
        tpar: float,
        phi0: np.ndarray | None = None,
        tol: float = DEFAULT_TOL,
        max_iter: int = 60,
    ) -> MASolution:
        phi = np.zeros_like(self.mesh) if phi0 is None else np.array(phi0, dtype=float)
        r, w = self._residual(tpar, phi)
        best = float(np.max(np.abs(r)))
        iterations = 0
        while best > tol:
            if iterations >= max_iter:
                raise ContinuityError(f"Newton stalled at t={tpar:g} (residual {best:.3e})")
            delta = self._newton_delta(tpar, w, r)
            step = 1.0
            for _ in range(30):
                cand = phi - step * delta
                r_new, w_new = self._residual(tpar, cand)
                new = float(np.max(np.abs(r_new)))
                if new < best:
                    break
                step *= 0.5
            else:
                raise ContinuityError(f"line search failed at t={tpar:g} (residual {best:.3e})")
            phi, r, w, best = cand, r_new, w_new, new
            iterations += 1
        return self._finish(tpar, phi, iterations)

    def _finish(self, tpar: float, phi: np.ndarray, iterations: int) -> MASolution:
        pinned = 0.0
        if tpar == 0.0:
            phi = self._mass_shift(phi)
            r, w = self._residual(tpar, phi)
            c = self.center
            pinned = float(
                (phi[c + 1] - 2.0 * phi[c] + phi[c - 1]) / self.h**2 - (w[c] - 1.0) * self.gpp[c]
            )
            r[c] = 0.0
        else:
            r, _ = self._residual(tpar, phi)
        return MASolution(
            t=tpar,
            phi_grid=phi,
            residual=float(np.max(np.abs(r))),
            pinned_defect=pinned,
            iterations=iterations,
            mass_residual=self._mass_residual(tpar, phi),
            potential=self.as_potential(tpar, phi),
        )

    def linearized_solution(self) -> np.ndarray:
        """Solution of the t = 0 equation linearized in f: Laplace(phi) = f-tilde.

        f-tilde is f recentred for discrete solvability; the nonlinear t = 0
        solution differs from this by O(||f||^2).
        """
        weight = self.gpp[1:-1]
        ftilde = self.f - float(np.dot(weight, self.f[1:-1]) / np.sum(weight))
        rhs = np.zeros_like(self.mesh)
        rhs[1:-1] = ftilde[1:-1] * self.gpp[1:-1]
        rhs[self.center] = 0.0
        phi = self._newton_delta(0.0, np.ones_like(self.mesh), rhs)
        return self._mass_shift(phi)

    def as_potential(self, tpar: float, phi_grid: np.ndarray, name: str | None = None) -> InvariantPotential:
        """Spline-backed potential; the Hessian is recovered from the equation."""
        spline = CubicSpline(self.mesh, phi_grid, bc_type="clamped")
        dspline = spline.derivative()
        lo, hi = float(self.mesh[0]), float(self.mesh[-1])
        model = self.model

        def clipped(t: np.ndarray) -> np.ndarray:
            return np.clip(np.atleast_2d(t), lo, hi)

        def value(t: np.ndarray) -> np.ndarray:
            return spline(clipped(t)[:, 0])

        def grad(t: np.ndarray) -> np.ndarray:
            return dspline(clipped(t)[:, 0])[:, None]

        def hess(t: np.ndarray) -> np.ndarray:
            tc = clipped(t)
            w = np.exp(self._f_at(tc) - tpar * spline(tc[:, 0]))
            return ((w - 1.0) * model.ref_hess(tc)[:, 0, 0])[:, None, None]

        return InvariantPotential(value, grad, hess, name or f"phi[t={tpar:g}]", dim=1)


class Solver2D:
    """Damped Newton for the n = 2 equation on a truncated box.

    Second-order finite differences on a uniform grid; the residual is the
    Monge-Ampere form det(D^2 G + D^2 phi) - e^{f - t phi} det D^2 G at
    interior nodes with homogeneous Neumann closure on the boundary ring.
    Steps that leave the Kahler cone (det W <= 0 or W_11 <= 0 wherever the
    reference density is above its rounding floor) are rejected by the line
    search.
    """

    def __init__(
        self,
        model: ToricFanoModel,
        ricci: RicciPotentialData | None = None,
        halfwidth: float = 33.0,
        nodes: int = 221,
        active_floor: float = 1e-10,
    ):
        if model.n != 2:
            raise ValueError("Solver2D requires a two-dimensional model")
        self.model = model
        self.ricci = ricci if ricci is not None else ricci_potential(model)
        self.axis = np.linspace(-halfwidth, halfwidth, nodes)
        self.h = float(self.axis[1] - self.axis[0])
        self.nodes = nodes
        t1, t2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        pts = np.column_stack([t1.ravel(), t2.ravel()])
        g = model.ref_hess(pts)
        self.g11 = g[:, 0, 0].reshape(nodes, nodes)
        self.g12 = g[:, 0, 1].reshape(nodes, nodes)
        self.g22 = g[:, 1, 1].reshape(nodes, nodes)
        self.det_g = self.g11 * self.g22 - self.g12**2
        # The equation rows are restricted to nodes where det D^2 G is far
        # above the rounding floor of the difference stencils; in the deeper
        # truncation tail every term underflows relative precision and the
        # rows would only feed noise into the Newton updates.  Tail nodes are
        # closed with constant extension toward the center, the discrete form
        # of the asymptotically-linear behavior of G + phi.
        self.active = np.zeros((nodes, nodes), dtype=bool)
        self.active[1:-1, 1:-1] = self.det_g[1:-1, 1:-1] > active_floor
        f = self.ricci.value(pts).reshape(nodes, nodes)
        # Recenter on the mesh (see Solver1D): keeps the discrete mass
        # constraint and the t = 0 problem consistent on this grid.
        det_act = self.det_g[self.active]
        num = float(np.sum(det_act))
        den = float(np.sum(np.exp(f[self.active]) * det_act))
        self.kappa = math.log(num / den)
        self.f = f + self.kappa
        # Positivity of W is only checked where det D^2 G also dominates the
        # determinant swing of Newton transients and the solver tolerance.
        self.cone_mask = (self.det_g >= 1e-7 * float(self.det_g.max()))[1:-1, 1:-1]
        self.center = (nodes // 2) * nodes + nodes // 2
        self.volume_mesh = (2.0 * math.pi) ** 2 * 2.0 * self.h**2 * num
        self._index_template()

    def _index_template(self) -> None:
        n = self.nodes
        idx = np.arange(n * n).reshape(n, n)
        self._active_int = self.active[1:-1, 1:-1].ravel()
        act_nodes = idx[1:-1, 1:-1].ravel()[self._active_int]
        offsets = [0, n, -n, 1, -1, n + 1, -n - 1, n - 1, -n + 1]
        rows = [np.tile(act_nodes, len(offsets))]
        cols = [np.concatenate([act_nodes + off for off in offsets])]
        # Tail and boundary closure: each non-active node is tied to its
        # diagonal neighbor toward the center, so phi extends as a constant
        # along lattice rays into the truncation tail.
        link = idx.ravel()[~self.active.ravel()]
        c = n // 2
        li, lj = link // n, link % n
        self._link_nodes = link
        self._link_nbr = (li - np.sign(li - c)) * n + (lj - np.sign(lj - c))
        rows.append(np.concatenate([link, link]))
        cols.append(np.concatenate([link, self._link_nbr]))
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._edge_data = np.concatenate([np.ones(link.size), -np.ones(link.size)])
        self._pin_mask = self._rows == self.center

    def _second_differences(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h2 = self.h**2
        pxx = (phi[2:, 1:-1] - 2.0 * phi[1:-1, 1:-1] + phi[:-2, 1:-1]) / h2
        pyy = (phi[1:-1, 2:] - 2.0 * phi[1:-1, 1:-1] + phi[1:-1, :-2]) / h2
        pxy = (phi[2:, 2:] + phi[:-2, :-2] - phi[2:, :-2] - phi[:-2, 2:]) / (4.0 * h2)
        return pxx, pxy, pyy

    def _residual(self, tpar: float, phi: np.ndarray) -> tuple[np.ndarray, dict, bool]:
        pxx, pxy, pyy = self._second_differences(phi)
        w11 = self.g11[1:-1, 1:-1] + pxx
        w12 = self.g12[1:-1, 1:-1] + pxy
        w22 = self.g22[1:-1, 1:-1] + pyy
        det_w = w11 * w22 - w12**2
        cone_ok = bool(np.all(det_w[self.cone_mask] > 0) and np.all(w11[self.cone_mask] > 0))
        rhs = np.exp(self.f[1:-1, 1:-1] - tpar * phi[1:-1, 1:-1]) * self.det_g[1:-1, 1:-1]
        n = self.nodes
        r = np.zeros((n, n))
        r[1:-1, 1:-1] = np.where(self.active[1:-1, 1:-1], det_w - rhs, 0.0)
        rvec = r.ravel()
        pflat = phi.ravel()
        rvec[self._link_nodes] = pflat[self._link_nodes] - pflat[self._link_nbr]
        if tpar == 0.0:
            rvec[self.center] = pflat[self.center]
        fields = {"w11": w11, "w12": w12, "w22": w22, "det_w": det_w, "rhs": rhs}
        return rvec, fields, cone_ok

    def _newton_delta(self, tpar: float, phi: np.ndarray, fields: dict, rvec: np.ndarray) -> np.ndarray:
        h2 = self.h**2
        m = self._active_int
        w11 = fields["w11"].ravel()[m]
        w12 = fields["w12"].ravel()[m]
        w22 = fields["w22"].ravel()[m]
        rhs = fields["rhs"].ravel()[m]
        center = -2.0 * (w11 + w22) / h2 + tpar * rhs
        data = np.concatenate(
            [
                center,
                np.tile(w22 / h2, 2),
                np.tile(w11 / h2, 2),
                np.tile(-w12 / (2.0 * h2), 2),
                np.tile(w12 / (2.0 * h2), 2),
                self._edge_data,
            ]
        )
        rows, cols = self._rows, self._cols
        if tpar == 0.0:
            data = np.where(self._pin_mask, 0.0, data)
            rows = np.append(rows, self.center)
            cols = np.append(cols, self.center)
            data = np.append(data, 1.0)
        n2 = self.nodes**2
        jac = coo_matrix((data, (rows, cols)), shape=(n2, n2)).tocsc()
        return splu(jac).solve(rvec)

    def _mass_shift(self, phi: np.ndarray) -> np.ndarray:
        weight = np.exp(self.f[self.active]) * self.det_g[self.active]
        return phi - float(np.sum(weight * phi[self.active]) / np.sum(weight))

    def _mass_residual(self, tpar: float, phi: np.ndarray, det_w: np.ndarray) -> float:
        act = self.active[1:-1, 1:-1]
        mass = (2.0 * math.pi) ** 2 * 2.0 * self.h**2 * float(
            np.sum(np.exp(tpar * phi[1:-1, 1:-1][act]) * det_w[act])
        )
        return abs(mass - self.volume_mesh) / self.volume_mesh

    def solve(
        self,
        tpar: float,
        phi0: np.ndarray | None = None,
        tol: float = DEFAULT_TOL,
        max_iter: int = 40,
    ) -> MASolution:
        n = self.nodes
        phi = np.zeros((n, n)) if phi0 is None else np.array(phi0, dtype=float).reshape(n, n)
        rvec, fields, cone_ok = self._residual(tpar, phi)
        if not cone_ok:
            raise ContinuityError(f"initial guess leaves the Kahler cone at t={tpar:g}")
        best = float(np.max(np.abs(rvec)))
        iterations = 0
        while best > tol:
            if iterations >= max_iter:
                raise ContinuityError(f"Newton stalled at t={tpar:g} (residual {best:.3e})")
            delta = self._newton_delta(tpar, phi, fields, rvec).reshape(n, n)
            step = 1.0
            for _ in range(25):
                cand = phi - step * delta
                r_new, f_new, ok = self._residual(tpar, cand)
                new = float(np.max(np.abs(r_new)))
                if ok and new < best:
                    break
                step *= 0.5
            else:
                raise ContinuityError(f"line search failed at t={tpar:g} (residual {best:.3e})")
            phi, rvec, fields, best = cand, r_new, f_new, new
            iterations += 1
        return self._finish(tpar, phi, fields, iterations)

    def _finish(self, tpar: float, phi: np.ndarray, fields: dict, iterations: int) -> MASolution:
        pinned = 0.0
        if tpar == 0.0:
            phi = self._mass_shift(phi)
            rvec, fields, _ = self._residual(tpar, phi)
            i, j = self.nodes // 2, self.nodes // 2
            pinned = float(fields["det_w"][i - 1, j - 1] - fields["rhs"][i - 1, j - 1])
            rvec[self.center] = 0.0
        else:
            rvec, fields, _ = self._residual(tpar, phi)
        return MASolution(
            t=tpar,
            phi_grid=phi,
            residual=float(np.max(np.abs(rvec))),
            pinned_defect=pinned,
            iterations=iterations,
            mass_residual=self._mass_residual(tpar, phi, fields["det_w"]),
            potential=self.as_potential(tpar, phi),
        )

    def linearized_solution(self) -> np.ndarray:
        """Solution of the t = 0 equation linearized in f: Laplace(phi) = f-tilde.

        f-tilde is f recentred for discrete solvability; the nonlinear t = 0
        solution differs from this by O(||f||^2).
        """
        n = self.nodes
        det_act = self.det_g[self.active]
        ftilde = self.f - float(np.sum(self.f[self.active] * det_act) / np.sum(det_act))
        rhs = np.zeros((n, n))
        act_int = self.active[1:-1, 1:-1]
        rhs[1:-1, 1:-1] = np.where(
            act_int, ftilde[1:-1, 1:-1] * self.det_g[1:-1, 1:-1], 0.0
        )
        rvec = rhs.ravel()
        rvec[self.center] = 0.0
        zero = np.zeros((n, n))
        _, fields, _ = self._residual(0.0, zero)
        phi = self._newton_delta(0.0, zero, fields, rvec).reshape(n, n)
        return self._mass_shift(phi)

    def as_potential(self, tpar: float, phi_grid: np.ndarray, name: str | None = None) -> InvariantPotential:
        spline = RectBivariateSpline(self.axis, self.axis, phi_grid, kx=5, ky=5)
        lo, hi = float(self.axis[0]), float(self.axis[-1])

        def clipped(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            tc = np.clip(np.atleast_2d(t), lo, hi)
            return tc[:, 0], tc[:, 1]

        def value(t: np.ndarray) -> np.ndarray:
            x, y = clipped(t)
            return spline.ev(x, y)

        def grad(t: np.ndarray) -> np.ndarray:
            x, y = clipped(t)
            return np.column_stack([spline.ev(x, y, dx=1), spline.ev(x, y, dy=1)])

        def hess(t: np.ndarray) -> np.ndarray:
            x, y = clipped(t)
            out = np.empty((x.size, 2, 2))
            out[:, 0, 0] = spline.ev(x, y, dx=2)
            out[:, 0, 1] = out[:, 1, 0] = spline.ev(x, y, dx=1, dy=1)
            out[:, 1, 1] = spline.ev(x, y, dy=2)
            return out

        return InvariantPotential(value, grad, hess, name or f"phi[t={tpar:g}]", dim=2)


def make_solver(model: ToricFanoModel, **kwargs) -> Solver1D | Solver2D:
    """Solver for the model's dimension (paths are supported for n = 1, 2)."""
    if model.n == 1:
        return Solver1D(model, **kwargs)
    if model.n == 2:
        return Solver2D(model, **kwargs)
    raise ValueError("continuity paths are implemented for n = 1 and n = 2 only")


def solve_ma(
    model: ToricFanoModel,
    tpar: float,
    phi0: np.ndarray | None = None,
    solver: Solver1D | Solver2D | None = None,
    tol: float = DEFAULT_TOL,
) -> MASolution:
    """Solve det D^2(G + phi) = e^{f - t phi} det D^2 G at one value of t."""
    if solver is None:
        solver = make_solver(model)
    return solver.solve(tpar, phi0=phi0, tol=tol)


# ---------------------------------------------------------------------------
# path continuation


@dataclass
class ContinuityState:
    """Accepted path state with tracked functionals.

    All energies use the volume-normalized conventions of the functionals
    module; `ij_integral` is the trapezoid value of int_0^t [I - J] ds on the
    accepted grid.
    """

    t: float
    phi: InvariantPotential
    phi_grid: np.ndarray
    residual: float
    pinned_defect: float
    newton_iterations: int
    sup_phi: float
    avg_minus_phi: float
    avg_phi_ref: float
    energies: dict
    ik: dict
    min_rho: float
    mass_residual: float
    ij_integral: float


@dataclass
class PathResult:
    """Outcome of a continuation run.

    `completed` is False when Newton continuation failed before the requested
    endpoint; `edge_t` is then the numerical edge of the solvable set at this
    resolution, never a mathematical claim about the continuity family.
    """

    model: ToricFanoModel
    m_rho: int
    t_target: float
    states: list[ContinuityState]
    completed: bool
    failure: str | None

    @property
    def edge_t(self) -> float | None:
        return self.states[-1].t if self.states else None

    @property
    def partial_c0_constant(self) -> float:
        """Observed lower bound for the Bergman density along the path."""
        return min(state.min_rho for state in self.states)


def _make_state(
    model: ToricFanoModel,
    sol: MASolution,
    m_rho: int,
    prev: ContinuityState | None,
) -> ContinuityState:
    pot = sol.potential
    en = aubin_energies(model, pot)
    ik = {k: float(energy_ik(model, pot, k)) for k in range(2, model.n + 2)}
    t = model.quad_t
    vals = pot.value(t)
    dens_ref = wedge_density([model.ref_hess(t)], [model.n])
    dens_phi = wedge_density([model.ref_hess(t) + pot.hess(t)], [model.n])
    volume = model.volume
    avg_minus_phi = model.integrate_invariant(-vals * dens_phi) / volume
    avg_phi_ref = model.integrate_invariant(vals * dens_ref) / volume
    min_rho = float(np.min(bergman_density_values(model, m_rho, pot, t)))
    if prev is None:
        ij_integral = 0.0
    else:
        ij_integral = prev.ij_integral + 0.5 * (sol.t - prev.t) * (
            prev.energies["i_minus_j"] + en["i_minus_j"]
        )
    return ContinuityState(
        t=sol.t,
        phi=pot,
        phi_grid=sol.phi_grid,
        residual=sol.residual,
        pinned_defect=sol.pinned_defect,
        newton_iterations=sol.iterations,
        sup_phi=float(np.max(sol.phi_grid)),
        avg_minus_phi=avg_minus_phi,
        avg_phi_ref=avg_phi_ref,
        energies=en,
        ik=ik,
        min_rho=min_rho,
        mass_residual=sol.mass_residual,
        ij_integral=ij_integral,
    )


def _advance(
    solver: Solver1D | Solver2D,
    t_from: float | None,
    phi_from: np.ndarray | None,
    t_to: float,
    tol: float,
    halvings: int,
) -> MASolution:
    try:
        return solver.solve(t_to, phi0=phi_from, tol=tol)
    except ContinuityError:
        if halvings <= 0 or t_from is None:
            raise
        mid = 0.5 * (t_from + t_to)
        mid_sol = _advance(solver, t_from, phi_from, mid, tol, halvings - 1)
        return _advance(solver, mid, mid_sol.phi_grid, t_to, tol, halvings - 1)


def run_path(
    model: ToricFanoModel,
    t_grid: Sequence[float] | None = None,
    delta: float = DEFAULT_DELTA,
    dt: float = 0.01,
    m_rho: int = 1,
    solver: Solver1D | Solver2D | None = None,
    tol: float = DEFAULT_TOL,
    max_halvings: int = 4,
) -> PathResult:
    """Warm-started Newton continuation over t in [0, 1 - delta].

    Args:
        model: toric model whose reference perturbation drives the path.
        t_grid: explicit increasing grid starting at 0; overrides delta/dt.
        delta: distance kept from t = 1 (vector fields make t = 1 singular).
        dt: grid spacing when t_grid is not given.
        m_rho: power of the line bundle used for the tracked Bergman minimum.
        solver: preconfigured solver (useful for custom meshes).
        tol: Newton residual tolerance.
        max_halvings: depth of local t-step halving before giving up.

    Returns:
        PathResult; on continuation failure the result carries the states up
        to the last good t together with the failure message.
    """
    if t_grid is None:
        t_end = 1.0 - delta
        steps = max(1, int(round(t_end / dt)))
        t_grid = np.linspace(0.0, t_end, steps + 1)
    else:
        t_grid = np.asarray(list(t_grid), dtype=float)
        if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
            raise ValueError("t_grid must increase from 0")
    if solver is None:
        solver = make_solver(model)
    states: list[ContinuityState] = []
    failure = None
    prev_t: float | None = None
    prev_phi: np.ndarray | None = None
    for tv in t_grid:
        try:
            sol = _advance(solver, prev_t, prev_phi, float(tv), tol, max_halvings)
        except ContinuityError as err:
            failure = f"continuation stopped at t={tv:g}: {err}"
            break
        states.append(_make_state(model, sol, m_rho, states[-1] if states else None))
        prev_t, prev_phi = float(tv), sol.phi_grid
    return PathResult(
        model=model,
        m_rho=m_rho,
        t_target=float(t_grid[-1]),
        states=states,
        completed=failure is None,
        failure=failure,
    )


# ---------------------------------------------------------------------------
# verification along a path


def _states_of(path: PathResult | Sequence[ContinuityState]) -> list[ContinuityState]:
    return list(path.states) if isinstance(path, PathResult) else list(path)


def verify_path_identity(path: PathResult | Sequence[ContinuityState]) -> dict:
    """Residual profile of -(1/t) int_0^t [I - J] ds = J(phi_t) - avg int phi_t omega^n.

    The integral runs over the computed range [0, t]; at the final state it
    is the full path integral, reported but not asserted separately.
    """
    states = [s for s in _states_of(path) if s.t > 0.0]
    if len(states) < 2:
        raise ValueError("need at least three accepted states (two with t > 0)")
    t = np.array([s.t for s in states])
    lhs = np.array([-s.ij_integral / s.t for s in states])
    rhs = np.array([s.energies["J"] - s.avg_phi_ref for s in states])
    scale = max(float(np.max(np.abs(rhs))), 1e-12)
    rel = np.abs(lhs - rhs) / scale
    return {
        "t": t,
        "lhs": lhs,
        "rhs": rhs,
        "residual": lhs - rhs,
        "relative_residual": rel,
        "max_relative_residual": float(np.max(rel)),
        "final_relative_residual": float(rel[-1]),
        "scale": scale,
    }


def verify_apriori_estimates(
    model: ToricFanoModel,
    path: PathResult | Sequence[ContinuityState],
    k: int,
    alpha_one: float | None = None,
    alpha_k: float | None = None,
    lam: float = 1.0,
) -> dict:
    """Slack profiles for the tracked a priori estimates along a path.

    At each state computes
      (a) the slack of  avg int (-phi) omega_phi^n + (n-k+1) I_k <= n sup phi,
      (b) the profiles  sup phi - [(1-alpha)/alpha] avg int (-phi) omega_phi^n
          - lam * I_k  (k >= 2 form, with its k = 1 analogue dropping the I_k
          term); the existence bounds assert these stay bounded above,
      (c) the Jensen slack  log avg int e^z omega_phi^n - avg int z
          omega_phi^n >= 0  with z = alpha t sup phi + (1-alpha) t phi (only
          when alpha_k is given),
      (d) the max Monge-Ampere and mass residuals, i.e. the pointwise
          identity e^{t phi} omega_phi^n = e^f omega^n and its integral.
    """
    states = _states_of(path)
    if not states:
        raise ValueError("empty path")
    n = model.n
    if not 2 <= k <= n + 1:
        raise ValueError(f"need 2 <= k <= n+1 = {n + 1}")
    t = np.array([s.t for s in states])
    sup = np.array([s.sup_phi for s in states])
    aminus = np.array([s.avg_minus_phi for s in states])
    ikv = np.array([s.ik[k] for s in states])
    out = {
        "t": t,
        "sup_phi": sup,
        "avg_minus_phi": aminus,
        "ik": ikv,
        "apriori_slack": n * sup - (aminus + (n - k + 1) * ikv),
        "max_residual": float(max(s.residual for s in states)),
        "max_mass_residual": float(max(s.mass_residual for s in states)),
    }
    if alpha_k is not None:
        out["bound_profile_k"] = sup - (1.0 - alpha_k) / alpha_k * aminus - lam * ikv
        out["jensen_slack"] = np.array([jensen_slack(model, s, alpha_k) for s in states])
    if alpha_one is not None:
        out["bound_profile_k1"] = sup - (1.0 - alpha_one) / alpha_one * aminus
    return out


def jensen_slack(
    model: ToricFanoModel,
    state: ContinuityState,
    alpha: float,
) -> float:
    """Slack of the Jensen step at one state (nonnegative for alpha in (0,1)).

    With z = alpha t sup phi + (1 - alpha) t phi, Jensen's inequality for the
    normalized measure omega_phi^n / V gives
        avg int z omega_phi^n <= log avg int e^z omega_phi^n.

    Both averages use the discrete quadrature measure normalized by its own
    mass, so the slack is nonnegative up to rounding (not merely up to the
    quadrature error of the volume).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    t = model.quad_t
    w = model.quad_weights
    pot = state.phi
    dens_phi = wedge_density([model.ref_hess(t) + pot.hess(t)], [model.n])
    mass = float(np.dot(w, dens_phi))
    z = alpha * state.t * state.sup_phi + (1.0 - alpha) * state.t * pot.value(t)
    avg_exp = float(np.dot(w, dens_phi * np.exp(z))) / mass
    avg_z = float(np.dot(w, dens_phi * z)) / mass
    return float(math.log(avg_exp) - avg_z)
