"""Toric geometry backbone for the CP^n laboratory.

Everything is phrased in log coordinates on the open torus orbit: a torus
invariant Kahler form is i*ddbar of a smooth convex function of
t = (log|w_1|^2, ..., log|w_n|^2), and its top wedge power has density

    omega^n  <->  n! * det(D^2 F)(t) dt dtheta,

so integrals over the manifold reduce to (2*pi)^n times a t-integral.  The
reference potential for CP^n is F(t) = (n+1)*log(1 + sum_i e^{t_i}); its
gradient maps R^n bijectively onto the open dilated simplex
{x_i > 0, sum x_i < n+1} with a closed-form inverse, which is what makes
bounded-domain quadrature possible.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "InvariantPotential",
    "ToricFanoModel",
    "mixed_ma_density",
    "wedge_density",
    "softmax_weights",
]


# ---------------------------------------------------------------------------
# invariant potentials


@dataclass
class InvariantPotential:
    """A bounded torus-invariant potential given by closed-form callables.

    Args:
        value: maps t of shape (M, n) to values of shape (M,).
        grad: maps t to gradients of shape (M, n).
        hess: maps t to Hessians of shape (M, n, n).
        name: short identifier used in reports.
    """

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    name: str = "phi"
    dim: int | None = None

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return self.value(t)

    def scaled(self, a: float, name: str | None = None) -> "InvariantPotential":
        return InvariantPotential(
            value=lambda t: a * self.value(t),
            grad=lambda t: a * self.grad(t),
            hess=lambda t: a * self.hess(t),
            name=name or f"{a:g}*{self.name}",
            dim=self.dim,
        )

    def shifted(self, const: float, name: str | None = None) -> "InvariantPotential":
        return InvariantPotential(
            value=lambda t: self.value(t) + const,
            grad=self.grad,
            hess=self.hess,
            name=name or f"{self.name}+{const:g}",
            dim=self.dim,
        )

    def plus(self, other: "InvariantPotential", name: str | None = None) -> "InvariantPotential":
        return InvariantPotential(
            value=lambda t: self.value(t) + other.value(t),
            grad=lambda t: self.grad(t) + other.grad(t),
            hess=lambda t: self.hess(t) + other.hess(t),
            name=name or f"{self.name}+{other.name}",
            dim=self.dim or other.dim,
        )


def zero_potential(n: int) -> InvariantPotential:
    """The zero potential on CP^n."""
    return InvariantPotential(
        value=lambda t: np.zeros(t.shape[0]),
        grad=lambda t: np.zeros_like(t),
        hess=lambda t: np.zeros((t.shape[0], t.shape[1], t.shape[1])),
        name="zero",
        dim=n,
    )


# ---------------------------------------------------------------------------
# softmax helpers (stable for large |t|)


def softmax_weights(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (u, logZ) with u_i = e^{t_i}/(1+sum e^{t_j}), logZ = log(1+sum e^{t_j}).

    The constant section '1' participates with exponent 0, so this is a softmax
    over n+1 entries with the first one pinned at zero.
    """
    t = np.atleast_2d(t)
    m = np.maximum(np.max(t, axis=1), 0.0)
    z = np.exp(-m) + np.sum(np.exp(t - m[:, None]), axis=1)
    u = np.exp(t - m[:, None]) / z[:, None]
    logz = m + np.log(z)
    return u, logz


# ---------------------------------------------------------------------------
# mixed Monge-Ampere density


def _det_stack(a: np.ndarray) -> np.ndarray:
    """Determinant of a stack (M, n, n); closed form for n <= 3."""
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0]
    if n == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if n == 3:
        return (
            a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
            - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
            + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
        )
    return np.linalg.det(a)


def mixed_ma_density(
    hessians: Sequence[np.ndarray], multiplicities: Sequence[int] | None = None
) -> np.ndarray:
    """Normalized mixed determinant D(A_1, ..., A_n) of Hessian stacks.

    Computed by polarization,
        D = (1/n!) * sum_{S subset [n]} (-1)^{n-|S|} det(sum_{i in S} A_i),
    normalized so that D(A, ..., A) = det A.  Each argument is a stack of
    shape (M, n, n); multiplicities expand the list to exactly n entries.

    For symmetric PSD inputs the value is the density (up to the n! wedge
    factor, see wedge_density) of the wedge product of the corresponding
    invariant (1,1)-forms, and is nonnegative.
    """
    mats: list[np.ndarray] = []
    if multiplicities is None:
        multiplicities = [1] * len(hessians)
    for a, mult in zip(hessians, multiplicities):
        if mult < 0:
            raise ValueError("multiplicities must be nonnegative")
        mats.extend([a] * mult)
    if not mats:
        raise ValueError("empty argument list")
    n = mats[0].shape[-1]
    if len(mats) != n:
        raise ValueError(f"need exactly n={n} matrices, got {len(mats)}")
    m = mats[0].shape[0]
    total = np.zeros(m)
    for r in range(1, n + 1):
        sign = (-1) ** (n - r)
        for subset in itertools.combinations(range(n), r):
            s = mats[subset[0]].copy()
            for i in subset[1:]:
                s = s + mats[i]
            total += sign * _det_stack(s)
    return total / math.factorial(n)


def wedge_density(
    hessians: Sequence[np.ndarray], multiplicities: Sequence[int] | None = None
) -> np.ndarray:
    """Density of omega_1 ^ ... ^ omega_n relative to dt (theta integrated out).

    Equals n! * mixed_ma_density; in particular for a single form it is
    n! * det(D^2 F), the density of omega^n.
    """
    n = hessians[0].shape[-1]
    return math.factorial(n) * mixed_ma_density(hessians, multiplicities)


# ---------------------------------------------------------------------------
# quadrature grids


@lru_cache(maxsize=None)
def _gauss_01(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor_grid(nodes_1d: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Tensor product of 1-D rules; returns points (M, n) and weights (M,)."""
    pts = [p for p, _ in nodes_1d]
    wts = [w for _, w in nodes_1d]
    mesh = np.meshgrid(*pts, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    w = wts[0]
    for wi in wts[1:]:
        w = np.multiply.outer(w, wi)
    return grid, w.ravel()


# ---------------------------------------------------------------------------
# the model


class ToricFanoModel:
    """CP^n with the Fubini-Study-type reference potential, plus quadrature.

    The reference convex potential is

        G(t) = coefficient * log(1 + sum_i e^{t_i}) + chi(t)

    with coefficient = n+1 by default (anticanonical normalization, so the
    reference class is 2*pi*c1) and chi an optional bounded invariant
    perturbation.  The moment map of the unperturbed part is a closed-form
    bijection onto the dilated open simplex {x_i > 0, sum x_i < coefficient};
    quadrature transplants t-integrals there through the inverse map, so all
    domains are bounded and Gauss-Legendre applies.

    Args:
        n: complex dimension, 1 <= n <= 3.
        nodes_per_axis: Gauss-Legendre nodes per simplex axis (defaults
            64 for n <= 2, 32 for n = 3).
        coefficient: coefficient of the log-sum-exp part (default n+1).
        perturbation: optional InvariantPotential chi added to the reference.
    """

    def __init__(
        self,
        n: int,
        nodes_per_axis: int | None = None,
        coefficient: float | None = None,
        perturbation: InvariantPotential | None = None,
    ):
        if n < 1 or n > 3:
            raise ValueError("only CP^1, CP^2, CP^3 are supported")
        self.n = int(n)
        self.coefficient = float(coefficient) if coefficient is not None else float(n + 1)
        if self.coefficient <= 0:
            raise ValueError("coefficient must be positive")
        if nodes_per_axis is None:
            nodes_per_axis = 64 if n <= 2 else 32
        self.nodes_per_axis = int(nodes_per_axis)
        self.perturbation = perturbation
        self._cache: dict = {}

    # -- closed-form reference geometry (unperturbed part) ------------------

    def base_value(self, t: np.ndarray) -> np.ndarray:
        _, logz = softmax_weights(np.atleast_2d(t))
        return self.coefficient * logz

    def base_grad(self, t: np.ndarray) -> np.ndarray:
        u, _ = softmax_weights(np.atleast_2d(t))
        return self.coefficient * u

    def base_hess(self, t: np.ndarray) -> np.ndarray:
        u, _ = softmax_weights(np.atleast_2d(t))
        return self.coefficient * (
            np.einsum("mi,ij->mij", u, np.eye(self.n)) - np.einsum("mi,mj->mij", u, u)
        )

    def base_third(self, t: np.ndarray) -> np.ndarray:
        """Third derivatives T_{ijk} of the unperturbed reference potential."""
        u, _ = softmax_weights(np.atleast_2d(t))
        n, eye = self.n, np.eye(self.n)
        uu = np.einsum("mi,mj->mij", u, u)
        t3 = (
            np.einsum("ij,ik,mi->mijk", eye, eye, u)
            - np.einsum("ij,mik->mijk", eye, uu)
            - np.einsum("ik,mij->mijk", eye, uu)
            - np.einsum("jk,mij->mijk", eye, uu)
            + 2.0 * np.einsum("mi,mj,mk->mijk", u, u, u)
        )
        return self.coefficient * t3

    # -- full reference (with perturbation) ---------------------------------

    def ref_value(self, t: np.ndarray) -> np.ndarray:
        v = self.base_value(t)
        if self.perturbation is not None:
            v = v + self.perturbation.value(np.atleast_2d(t))
        return v

    def ref_hess(self, t: np.ndarray) -> np.ndarray:
        h = self.base_hess(t)
        if self.perturbation is not None:
            h = h + self.perturbation.hess(np.atleast_2d(t))
        return h

    def moment_map(self, t: np.ndarray) -> np.ndarray:
        """Gradient of the unperturbed reference potential."""
        return self.base_grad(t)

    def inverse_moment_map(self, x: np.ndarray) -> np.ndarray:
        """Closed-form inverse: e^{t_i} = x_i / (coefficient - sum_j x_j)."""
        x = np.atleast_2d(x)
        rest = self.coefficient - np.sum(x, axis=1, keepdims=True)
        if np.any(x <= 0) or np.any(rest <= 0):
            raise ValueError("point outside the open moment simplex")
        return np.log(x) - np.log(rest)

    def base_det_hess_from_x(self, x: np.ndarray) -> np.ndarray:
        """det D^2 of the unperturbed potential at t(x); polynomial in x."""
        x = np.atleast_2d(x)
        rest = self.coefficient - np.sum(x, axis=1)
        return np.prod(x, axis=1) * rest / self.coefficient

    # -- quadrature ----------------------------------------------------------

    def _grid(self):
        key = "grid"
        if key not in self._cache:
            c, n = self.coefficient, self.n
            rules = [_gauss_01(self.nodes_per_axis)] * n
            s, ws = _tensor_grid(rules)
            x = np.empty_like(s)
            jac = np.full(s.shape[0], c)
            remaining = np.full(s.shape[0], c)
            for i in range(n):
                x[:, i] = remaining * s[:, i]
                if i < n - 1:
                    remaining = remaining * (1.0 - s[:, i])
                    jac = jac * remaining
            t = self.inverse_moment_map(x)
            det_base = self.base_det_hess_from_x(x)
            w_t = ws * jac / det_base
            self._cache[key] = (t, w_t, x)
        return self._cache[key]

    @property
    def quad_t(self) -> np.ndarray:
        """Quadrature nodes in log coordinates, shape (M, n)."""
        return self._grid()[0]

    @property
    def quad_weights(self) -> np.ndarray:
        """Weights turning density values at quad_t into the t-integral."""
        return self._grid()[1]

    @property
    def quad_x(self) -> np.ndarray:
        """Quadrature nodes in moment coordinates."""
        return self._grid()[2]

    def integrate_invariant(self, density) -> float:
        """(2*pi)^n times the t-integral of a density (callable or node values)."""
        t, w, _ = self._grid()
        vals = density(t) if callable(density) else np.asarray(density)
        return (2.0 * math.pi) ** self.n * float(np.dot(w, vals))

    @property
    def volume(self) -> float:
        """Total volume of the reference form, integral of n! det D^2 G."""
        key = "volume"
        if key not in self._cache:
            t = self.quad_t
            dens = wedge_density([self.ref_hess(t)], [self.n])
            self._cache[key] = self.integrate_invariant(dens)
        return self._cache[key]

    @property
    def analytic_volume(self) -> float:
        """(2*pi)^n * coefficient^n, exact for the unperturbed reference."""
        return (2.0 * math.pi) ** self.n * self.coefficient**self.n

    def average(self, density) -> float:
        """Volume-normalized integral."""
        return self.integrate_invariant(density) / self.volume

    # -- variants ------------------------------------------------------------

    def refined(self, levels: int = 1) -> "ToricFanoModel":
        """Copy with nodes_per_axis doubled `levels` times."""
        return ToricFanoModel(
            self.n,
            nodes_per_axis=self.nodes_per_axis * 2**levels,
            coefficient=self.coefficient,
            perturbation=self.perturbation,
        )

    def rescaled(self, m: int) -> "ToricFanoModel":
        """Model whose reference potential is m times this one's base potential.

        Used when a line bundle K^{-m} is treated with the standard machinery:
        the reference class scales by m.  Any perturbation is dropped.
        """
        return ToricFanoModel(
            self.n,
            nodes_per_axis=self.nodes_per_axis,
            coefficient=self.coefficient * m,
        )

    def with_perturbation(self, chi: InvariantPotential | None) -> "ToricFanoModel":
        return ToricFanoModel(
            self.n,
            nodes_per_axis=self.nodes_per_axis,
            coefficient=self.coefficient,
            perturbation=chi,
        )

    def __repr__(self) -> str:
        pert = f", chi={self.perturbation.name}" if self.perturbation else ""
        return (
            f"ToricFanoModel(CP^{self.n}, nodes={self.nodes_per_axis}, "
            f"coeff={self.coefficient:g}{pert})"
        )
