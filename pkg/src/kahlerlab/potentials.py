"""Library of bounded invariant test potentials on CP^n.

Every entry is closed form (value, gradient, Hessian), has sup norm <= 1 and
keeps the perturbed form Kahler with an eigenvalue margin: at the quadrature
nodes, min-eig(D^2(F+phi)) >= 0.1 * min-eig(D^2 F).  Entries come in three
families:

* weighted log-sum-exp tilts  a * [log(b_0 + sum b_i e^{t_i}) - log(1 + sum e^{t_i})],
* Gaussian bumps in log coordinates,
* polynomial bumps in moment coordinates (composed with the moment map, so
  Hessians use the closed-form third derivatives of the reference potential).

Grid-sampled potentials can be loaded from CSV (columns t1..tn, phi; for n = 2
the rows must form a complete tensor grid).  Outside the sampled box the
potential is extended by its boundary value with zero derivatives.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .geometry import InvariantPotential, ToricFanoModel, zero_potential

__all__ = [
    "library",
    "get_potential",
    "library_names",
    "random_potential",
    "kahler_margin",
    "grid_potential_from_csv",
    "weighted_lse_potential",
    "gaussian_potential",
    "moment_bump_potential",
]


def _weighted_lse(t: np.ndarray, logb: np.ndarray):
    """Value/grad/hess of log(b_0 + sum_i b_i e^{t_i}) in a stable way."""
    t = np.atleast_2d(t)
    m_pts, n = t.shape
    z = np.concatenate([np.full((m_pts, 1), logb[0]), t + logb[1:][None, :]], axis=1)
    zmax = np.max(z, axis=1)
    e = np.exp(z - zmax[:, None])
    ssum = np.sum(e, axis=1)
    val = zmax + np.log(ssum)
    v = e[:, 1:] / ssum[:, None]
    hess = np.einsum("mi,ij->mij", v, np.eye(n)) - np.einsum("mi,mj->mij", v, v)
    return val, v, hess


def weighted_lse_potential(
    n: int, weights: Sequence[float], amplitude: float, name: str
) -> InvariantPotential:
    """a * [weighted lse - plain lse]; bounded by a * max|log w_i|."""
    logb = np.log(np.asarray(weights, dtype=float))
    if logb.shape != (n + 1,):
        raise ValueError("need n+1 positive weights")
    zeros = np.zeros(n + 1)

    def value(t):
        v1, _, _ = _weighted_lse(t, logb)
        v0, _, _ = _weighted_lse(t, zeros)
        return amplitude * (v1 - v0)

    def grad(t):
        _, g1, _ = _weighted_lse(t, logb)
        _, g0, _ = _weighted_lse(t, zeros)
        return amplitude * (g1 - g0)

    def hess(t):
        _, _, h1 = _weighted_lse(t, logb)
        _, _, h0 = _weighted_lse(t, zeros)
        return amplitude * (h1 - h0)

    return InvariantPotential(value, grad, hess, name=name, dim=n)


def gaussian_potential(
    n: int, center: Sequence[float], sigma: float, amplitude: float, name: str
) -> InvariantPotential:
    """a * exp(-|t - t0|^2 / sigma^2)."""
    t0 = np.asarray(center, dtype=float)

    def value(t):
        d = np.atleast_2d(t) - t0
        return amplitude * np.exp(-np.sum(d * d, axis=1) / sigma**2)

    def grad(t):
        t = np.atleast_2d(t)
        d = t - t0
        e = np.exp(-np.sum(d * d, axis=1) / sigma**2)
        return amplitude * e[:, None] * (-2.0 / sigma**2) * d

    def hess(t):
        t = np.atleast_2d(t)
        d = t - t0
        e = np.exp(-np.sum(d * d, axis=1) / sigma**2)
        outer = np.einsum("mi,mj->mij", d, d)
        core = (4.0 / sigma**4) * outer - (2.0 / sigma**2) * np.eye(n)[None, :, :]
        return amplitude * e[:, None, None] * core

    return InvariantPotential(value, grad, hess, name=name, dim=n)


class _MomentBump:
    """b(x) composed with the moment map x = grad F of the reference."""

    def __init__(self, n: int, b, b_grad, b_hess, amplitude: float):
        self.helper = ToricFanoModel(n)  # derivative formulas only, grid unused
        self.n = n
        self.b, self.b_grad, self.b_hess = b, b_grad, b_hess
        self.amp = amplitude

    def value(self, t):
        x = self.helper.moment_map(np.atleast_2d(t))
        return self.amp * self.b(x)

    def grad(self, t):
        t = np.atleast_2d(t)
        x = self.helper.moment_map(t)
        h = self.helper.base_hess(t)
        return self.amp * np.einsum("mp,mpj->mj", self.b_grad(x), h)

    def hess(self, t):
        t = np.atleast_2d(t)
        x = self.helper.moment_map(t)
        h = self.helper.base_hess(t)
        t3 = self.helper.base_third(t)
        term1 = np.einsum("mpj,mpq,mqk->mjk", h, self.b_hess(x), h)
        term2 = np.einsum("mp,mpjk->mjk", self.b_grad(x), t3)
        return self.amp * (term1 + term2)


def moment_bump_potential(
    n: int, powers: Sequence[int], amplitude: float, name: str
) -> InvariantPotential:
    """Bump a * prod_i x_i^{p_i} * (n+1 - sum x) / norm in moment coordinates.

    The normalization makes sup |b| = 1 over the closed simplex before the
    amplitude is applied, so the sup norm of the entry is |amplitude|.
    """
    c = float(n + 1)
    p = np.asarray(powers, dtype=float)
    # max of prod x^p * (c - S) over the simplex: stationary point by Lagrange.
    ptot = float(np.sum(p))
    xstar = p * c / (ptot + 1.0)
    norm = float(np.prod(xstar**p) * (c - np.sum(xstar)))

    def b(x):
        rest = c - np.sum(x, axis=1)
        return np.prod(x**p, axis=1) * rest / norm

    def b_grad(x):
        rest = c - np.sum(x, axis=1)
        base = np.prod(x**p, axis=1)
        g = base[:, None] * (p[None, :] / x) * rest[:, None] - base[:, None]
        return g / norm

    def b_hess(x):
        rest = c - np.sum(x, axis=1)
        base = np.prod(x**p, axis=1)
        px = p[None, :] / x
        br = (base * rest)[:, None, None]
        h = np.einsum("mi,mj->mij", px, px) * br
        h -= np.einsum("mi,ij->mij", px / x, np.eye(n)) * br  # same-factor correction
        h -= base[:, None, None] * (px[:, :, None] + px[:, None, :])
        return h / norm

    mb = _MomentBump(n, b, b_grad, b_hess, amplitude)
    return InvariantPotential(mb.value, mb.grad, mb.hess, name=name, dim=n)


def library(n: int) -> dict[str, InvariantPotential]:
    """Named closed-form test potentials for CP^n (sign-balanced, with an
    anisotropic entry for n >= 2)."""
    if n == 1:
        w_plus = [1.0, 2.0]
        w_tilt = [0.6, 1.4]
    elif n == 2:
        w_plus = [1.0, 2.0, 2.0]
        w_tilt = [1.0, 1.8, 0.6]
    else:
        w_plus = [1.0, 2.0, 2.0, 2.0]
        w_tilt = [1.0, 1.8, 0.6, 1.3]
    center_off = [0.5] + [-0.3] * (n - 1)
    entries = {
        "lse_plus": weighted_lse_potential(n, w_plus, 0.5, "lse_plus"),
        "lse_minus": weighted_lse_potential(n, w_plus, -0.5, "lse_minus"),
        "lse_tilt": weighted_lse_potential(n, w_tilt, 0.6, "lse_tilt"),
        # off-center Gaussians need small amplitude and width: their transverse
        # negative eigenvalue decays slower than min-eig(D^2 F) along the
        # shifted axis, which eats the Kahler margin
        "gauss_plus": gaussian_potential(n, [0.0] * n, 2.0, 0.25, "gauss_plus"),
        "gauss_minus": gaussian_potential(n, [0.0] * n, 1.5, -0.12, "gauss_minus"),
        "gauss_off": gaussian_potential(n, center_off, 1.5, 0.12, "gauss_off"),
        "bump_moment": moment_bump_potential(n, [1] * n, 0.25, "bump_moment"),
        "bump_moment_neg": moment_bump_potential(n, [1] * n, -0.25, "bump_moment_neg"),
        "bump_edge": moment_bump_potential(n, [2] + [1] * (n - 1), 0.2, "bump_edge"),
    }
    return entries


def library_names(n: int) -> list[str]:
    return sorted(library(n).keys())


def get_potential(n: int, name: str) -> InvariantPotential:
    lib = library(n)
    if name == "zero":
        return zero_potential(n)
    if name not in lib:
        raise KeyError(f"unknown potential {name!r}; choose from {sorted(lib)} or 'zero'")
    return lib[name]


def kahler_margin(model: ToricFanoModel, phi: InvariantPotential) -> float:
    """min over quadrature nodes of eig_min(D^2(G+phi)) / eig_min(D^2 G)."""
    t = model.quad_t
    href = model.ref_hess(t)
    hfull = href + phi.hess(t)
    if model.n == 1:
        return float(np.min(hfull[:, 0, 0] / href[:, 0, 0]))
    eref = np.linalg.eigvalsh(href)[:, 0]
    efull = np.linalg.eigvalsh(hfull)[:, 0]
    return float(np.min(efull / eref))


def random_potential(
    model: ToricFanoModel,
    rng: np.random.Generator,
    amplitude: float = 0.15,
    name: str = "random",
) -> InvariantPotential:
    """Seeded random combination of library entries, rescaled to the requested
    sup norm and, if needed, further shrunk until the Kahler margin holds."""
    lib = library(model.n)
    coeffs = rng.uniform(-1.0, 1.0, size=len(lib))
    phi = zero_potential(model.n)
    for c, entry in zip(coeffs, lib.values()):
        phi = phi.plus(entry.scaled(float(c)))
    sup = float(np.max(np.abs(phi.value(model.quad_t))))
    if sup > 0:
        phi = phi.scaled(amplitude / sup)
    for _ in range(8):
        if kahler_margin(model, phi) >= 0.1:
            break
        phi = phi.scaled(0.5)
    phi.name = name
    return phi


def grid_potential_from_csv(path: str, n: int) -> InvariantPotential:
    """Load a grid-sampled potential from CSV with columns t1..tn, phi.

    n = 1: rows are (t, phi) sorted by t, interpolated by a cubic spline.
    n = 2: rows are (t1, t2, phi) forming a complete tensor grid.
    Outside the sampled box the value is clamped (zero derivatives there).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header line
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != n + 1:
        raise ValueError(f"expected {n + 1} columns, found {data.shape[1]}")
    if n == 1:
        order = np.argsort(data[:, 0])
        tg, vg = data[order, 0], data[order, 1]
        spl = CubicSpline(tg, vg, bc_type="natural")
        lo, hi = tg[0], tg[-1]

        def value(t):
            tc = np.clip(np.atleast_2d(t)[:, 0], lo, hi)
            return spl(tc)

        def grad(t):
            t1 = np.atleast_2d(t)[:, 0]
            inside = (t1 >= lo) & (t1 <= hi)
            out = np.zeros((t1.shape[0], 1))
            out[inside, 0] = spl(t1[inside], 1)
            return out

        def hess(t):
            t1 = np.atleast_2d(t)[:, 0]
            inside = (t1 >= lo) & (t1 <= hi)
            out = np.zeros((t1.shape[0], 1, 1))
            out[inside, 0, 0] = spl(t1[inside], 2)
            return out

        return InvariantPotential(value, grad, hess, name="grid_csv", dim=1)
    if n == 2:
        t1 = np.unique(data[:, 0])
        t2 = np.unique(data[:, 1])
        if t1.size * t2.size != data.shape[0]:
            raise ValueError("rows do not form a complete tensor grid")
        idx = np.lexsort((data[:, 1], data[:, 0]))
        vals = data[idx, 2].reshape(t1.size, t2.size)
        spl = RectBivariateSpline(t1, t2, vals, kx=3, ky=3)
        lo = np.array([t1[0], t2[0]])
        hi = np.array([t1[-1], t2[-1]])

        def value(t):
            tc = np.clip(np.atleast_2d(t), lo, hi)
            return spl.ev(tc[:, 0], tc[:, 1])

        def grad(t):
            t = np.atleast_2d(t)
            inside = np.all((t >= lo) & (t <= hi), axis=1)
            out = np.zeros_like(t)
            if np.any(inside):
                out[inside, 0] = spl.ev(t[inside, 0], t[inside, 1], dx=1)
                out[inside, 1] = spl.ev(t[inside, 0], t[inside, 1], dy=1)
            return out

        def hess(t):
            t = np.atleast_2d(t)
            inside = np.all((t >= lo) & (t <= hi), axis=1)
            out = np.zeros((t.shape[0], 2, 2))
            if np.any(inside):
                a, b = t[inside, 0], t[inside, 1]
                out[inside, 0, 0] = spl.ev(a, b, dx=2)
                out[inside, 1, 1] = spl.ev(a, b, dy=2)
                mixed = spl.ev(a, b, dx=1, dy=1)
                out[inside, 0, 1] = out[inside, 1, 0] = mixed
            return out

        return InvariantPotential(value, grad, hess, name="grid_csv", dim=2)
    raise ValueError("grid-sampled potentials are supported for n = 1, 2")
