"""Bergman kernels and projective potentials from spaces of sections.

Holomorphic sections of the m-th anticanonical power on CP^n restrict to the
torus chart as monomials z^J with J >= 0, |J| <= m(n+1); the reference
pointwise norm is |z^J|^2_{h^m} = exp(<J,t> - m G(t)) with G the reference
convex potential.  Torus invariance makes the reference Gram matrix diagonal,
so orthonormalization and kernel evaluation stay in log space throughout.

The module provides

* reference section norms and Bergman kernels of subspaces (theta-averaged
  closed form for monomial-spanned subspaces, exact torus evaluation for
  general coefficient subspaces),
* potentials log sum mu_j |s_j|^2 attached to a diagonal inner product, as
  honest InvariantPotential objects on the rescaled model whose reference
  class matches the bundle,
* the weighted-sum approximation of a given Kahler potential through the
  inner product weighted by e^{-m phi} against omega_phi^n,
* an eigenvalue-control probe along rays of diagonal inner products,
  recording log(mu_1/mu_k) against the energy I of the attached potential.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import InvariantPotential, ToricFanoModel, wedge_density

__all__ = [
    "SectionBasis",
    "SectionSubspace",
    "InnerProductDiagonal",
    "section_basis",
    "monomial_section_norms",
    "BergmanKernel",
    "bergman_kernel",
    "bergman_potential",
    "bergman_approximation",
    "bergman_density_values",
    "weighted_section_norms",
    "eigenvalue_control_probe",
]

GRAM_CONDITION_LIMIT = 1e12


def _exponent_lattice(n: int, d: int) -> np.ndarray:
    pts = [j for j in itertools.product(range(d + 1), repeat=n) if sum(j) <= d]
    pts.sort()
    return np.asarray(pts, dtype=int)


@dataclass
class SectionBasis:
    """Monomial basis of sections of the m-th power of the model's class."""

    model: ToricFanoModel
    m: int
    exponents: np.ndarray  # (N, n) integer lattice points of the dilated simplex
    gram_diag: np.ndarray  # reference L2 norms squared, (N,)

    @property
    def size(self) -> int:
        return self.exponents.shape[0]

    def log_weights(self, t: np.ndarray) -> np.ndarray:
        """log |z^J|^2_{h^m} at nodes t: (M, N) array <J,t> - m G(t)."""
        t = np.atleast_2d(t)
        return t @ self.exponents.T - self.m * self.model.ref_value(t)[:, None]


def section_basis(model: ToricFanoModel, m: int) -> SectionBasis:
    """Enumerate monomial sections and their reference norms.

    The norm of z^J is the volume-form integral of its pointwise norm,
    (2 pi)^n n! int exp(<J,t> - m G) det D^2 G dt, computed with a log-space
    shift so large exponents cannot overflow.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    d = m * model.coefficient
    d_int = round(d)
    if abs(d - d_int) > 1e-12:
        raise ValueError("m times the model coefficient must be an integer degree")
    exps = _exponent_lattice(model.n, d_int)
    t, w = model.quad_t, model.quad_weights
    dens = wedge_density([model.ref_hess(t)], [model.n])
    logged = t @ exps.T - m * model.ref_value(t)[:, None]  # (M, N)
    shift = np.max(logged, axis=0)
    gram = (2.0 * math.pi) ** model.n * np.exp(shift) * (
        (w * dens) @ np.exp(logged - shift[None, :])
    )
    if not np.all(gram > 0):
        raise ArithmeticError("nonpositive section norm; quadrature failure")
    cond = float(np.max(gram) / np.min(gram))
    if cond > GRAM_CONDITION_LIMIT:
        raise ArithmeticError(f"Gram condition {cond:.2e} exceeds {GRAM_CONDITION_LIMIT:.0e}")
    return SectionBasis(model=model, m=m, exponents=exps, gram_diag=gram)


def monomial_section_norms(model: ToricFanoModel, m: int) -> dict[tuple, float]:
    """Mapping exponent tuple -> reference norm squared."""
    basis = section_basis(model, m)
    return {tuple(int(v) for v in j): float(g) for j, g in zip(basis.exponents, basis.gram_diag)}


@dataclass
class SectionSubspace:
    """Subspace of sections given by a coefficient matrix over the basis."""

    basis: SectionBasis
    coeffs: np.ndarray  # (N, k), complex or real, full column rank

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def monomials(cls, basis: SectionBasis, indices) -> "SectionSubspace":
        c = np.zeros((basis.size, len(indices)))
        for col, idx in enumerate(indices):
            c[idx, col] = 1.0
        return cls(basis=basis, coeffs=c)

    @classmethod
    def from_exponents(cls, basis: SectionBasis, exponent_tuples) -> "SectionSubspace":
        lookup = {tuple(j): i for i, j in enumerate(basis.exponents.tolist())}
        return cls.monomials(basis, [lookup[tuple(e)] for e in exponent_tuples])

    @property
    def is_monomial(self) -> bool:
        return bool(np.all(np.sum(self.coeffs != 0, axis=0) == 1)) and np.isrealobj(self.coeffs)


class BergmanKernel:
    """Bergman kernel rho of a subspace w.r.t. the reference inner product."""

    def __init__(self, subspace: SectionSubspace):
        basis = subspace.basis
        c = subspace.coeffs.astype(complex)
        g = basis.gram_diag
        m_gram = (c.conj().T * g[None, :]) @ c
        evals = np.linalg.eigvalsh(m_gram)
        if evals[0] <= 0 or evals[-1] / evals[0] > GRAM_CONDITION_LIMIT:
            raise ArithmeticError("subspace Gram is singular or too ill-conditioned")
        self.subspace = subspace
        self.basis = basis
        # projector in monomial coordinates: P = C (C* G C)^{-1} C*
        self.projector = c @ np.linalg.solve(m_gram, c.conj().T)
        self.diag_projector = np.real(np.diag(self.projector)).copy()

    @property
    def is_invariant(self) -> bool:
        off = self.projector - np.diag(np.diag(self.projector))
        return bool(np.max(np.abs(off)) < 1e-13)

    def value(self, t: np.ndarray) -> np.ndarray:
        """theta-average of rho at log points t (exact rho when invariant)."""
        logw = self.basis.log_weights(t)  # (M, N)
        p = np.maximum(self.diag_projector, 0.0)
        active = p > 1e-300
        return np.exp(logsumexp(logw[:, active], b=p[active][None, :], axis=1))

    def value_torus(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Exact rho(t, theta) for general coefficient subspaces.

        t: (M, n), theta: (M, n); sections are evaluated at
        w_i = exp(t_i/2 + i theta_i).
        """
        basis = self.basis
        t = np.atleast_2d(t)
        theta = np.atleast_2d(theta)
        gscale = basis.model.ref_value(t) * basis.m  # (M,)
        exps = basis.exponents  # (N, n)
        logmod = 0.5 * (t @ exps.T)
        phase = theta @ exps.T
        # stabilize per-point: divide all monomials by exp(max log-modulus)
        shift = np.max(logmod, axis=1, keepdims=True)
        mono = np.exp(logmod - shift + 1j * phase)  # (M, N)
        m_gram = self.projector
        quad = np.einsum("mi,ij,mj->m", mono.conj(), m_gram, mono).real
        return np.maximum(quad, 0.0) * np.exp(2.0 * shift[:, 0] - gscale)

    def normalization_integral(self) -> float:
        """Volume-form integral of rho; equals dim of the subspace exactly.

        Uses the theta-average, which computes the full integral for any
        subspace because integration in theta is linear in rho.
        """
        model = self.basis.model
        t, w = model.quad_t, model.quad_weights
        dens = wedge_density([model.ref_hess(t)], [model.n])
        return model.integrate_invariant(self.value(t) * dens)

    def kahler_defect(self) -> float:
        """min eigenvalue of D^2(G + (1/m) log rho) over nodes, >= 0 up to
        roundoff for invariant subspaces (softmax covariance form)."""
        model = self.basis.model
        t = model.quad_t
        logw = self.basis.log_weights(t)
        p = np.maximum(self.diag_projector, 1e-300)
        z = logw + np.log(p)[None, :]
        z -= np.max(z, axis=1, keepdims=True)
        q = np.exp(z)
        q /= np.sum(q, axis=1, keepdims=True)
        j = self.basis.exponents.astype(float)
        mean = q @ j
        cov = np.einsum("mN,Ni,Nj->mij", q, j, j) - np.einsum("mi,mj->mij", mean, mean)
        if model.n == 1:
            return float(np.min(cov[:, 0, 0])) / self.basis.m
        return float(np.min(np.linalg.eigvalsh(cov)[:, 0])) / self.basis.m


def bergman_kernel(model: ToricFanoModel, m: int, subspace: SectionSubspace | None = None) -> BergmanKernel:
    """Kernel of the given subspace (full section space by default)."""
    if subspace is None:
        basis = section_basis(model, m)
        subspace = SectionSubspace(basis=basis, coeffs=np.eye(basis.size))
    return BergmanKernel(subspace)


@dataclass
class InnerProductDiagonal:
    """Hermitian PD inner product, diagonal in the reference-orthonormal basis.

    diag[j] is the squared norm of the j-th reference-orthonormal section; the
    simultaneous-diagonalization weights are mu = 1/diag (a scaling a -> c a
    sends mu -> mu/c).
    """

    diag: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        if np.any(self.diag <= 0):
            raise ValueError("inner product must be positive definite")

    @property
    def mu(self) -> np.ndarray:
        return 1.0 / self.diag


def bergman_potential(
    model: ToricFanoModel, m: int, inner: InnerProductDiagonal
) -> tuple[InvariantPotential, ToricFanoModel]:
    """Potential psi = log sum_j mu_j |s_j|^2_h attached to an inner product.

    The bundle is treated as the polarization itself, so psi is a potential
    relative to the rescaled reference (coefficient multiplied by m); the
    returned model carries that reference and psi is bounded on it, with
    D^2(ref + psi) equal to the softmax covariance of the exponents (PSD).

    Returns (psi, rescaled_model).
    """
    basis = section_basis(model, m)
    if inner.diag.shape != (basis.size,):
        raise ValueError(f"inner product needs {basis.size} diagonal entries")
    model_l = model.rescaled(m) if m != 1 or model.perturbation is not None else model
    logc = np.log(inner.mu) - np.log(basis.gram_diag)
    exps = basis.exponents.astype(float)

    def _z(t):
        t = np.atleast_2d(t)
        return t @ exps.T + logc[None, :]

    def value(t):
        return logsumexp(_z(t), axis=1) - model_l.base_value(np.atleast_2d(t))

    def _softmax(t):
        z = _z(t)
        z -= np.max(z, axis=1, keepdims=True)
        q = np.exp(z)
        return q / np.sum(q, axis=1, keepdims=True)

    def grad(t):
        q = _softmax(t)
        return q @ exps - model_l.base_grad(np.atleast_2d(t))

    def hess(t):
        q = _softmax(t)
        mean = q @ exps
        cov = np.einsum("mN,Ni,Nj->mij", q, exps, exps) - np.einsum("mi,mj->mij", mean, mean)
        return cov - model_l.base_hess(np.atleast_2d(t))

    psi = InvariantPotential(value, grad, hess, name="bergman_potential", dim=model.n)
    return psi, model_l


def weighted_section_norms(model: ToricFanoModel, m: int, phi: InvariantPotential) -> np.ndarray:
    """Diagonal Gram H_J = int |z^J|^2_{h^m} e^{-m phi} omega_phi^n.

    This is the inner product induced by the Kahler potential phi; the
    associated Bergman density of omega_phi is sum_J |z^J|^2_{h^m e^{-m phi}}
    / H_J.
    """
    basis = section_basis(model, m)
    t, w = model.quad_t, model.quad_weights
    a_phi = model.ref_hess(t) + phi.hess(t)
    dens_phi = wedge_density([a_phi], [model.n])
    logged = basis.log_weights(t) - m * phi.value(t)[:, None]
    shift = np.max(logged, axis=0)
    return (2.0 * math.pi) ** model.n * np.exp(shift) * (
        (w * dens_phi) @ np.exp(logged - shift[None, :])
    )


def bergman_density_values(
    model: ToricFanoModel, m: int, phi: InvariantPotential, t: np.ndarray
) -> np.ndarray:
    """rho_{omega_phi, m} at log points t (torus-invariant phi)."""
    basis = section_basis(model, m)
    h_diag = weighted_section_norms(model, m, phi)
    t = np.atleast_2d(t)
    logw = basis.log_weights(t) - m * phi.value(t)[:, None] - np.log(h_diag)[None, :]
    return np.exp(logsumexp(logw, axis=1))


def bergman_approximation(model: ToricFanoModel, m: int, phi: InvariantPotential) -> dict:
    """Weighted-sum approximation of phi from the e^{-m phi} omega_phi^n Gram.

    Computes the diagonal inner product H_J = int |z^J|^2 e^{-m(G+phi)}
    (omega_phi)^n, sets lambda_J proportional to gram_J / H_J normalized to
    lambda_1 = 1 (sorted descending), and reports the sup gap

        sup | (phi - sup phi) - (1/m) log sum_J lambda_J |s_J|^2_{h^m} |

    over the quadrature nodes.
    """
    basis = section_basis(model, m)
    t = model.quad_t
    h_diag = weighted_section_norms(model, m, phi)
    lam = basis.gram_diag / h_diag
    lam = lam / np.max(lam)
    order = np.argsort(-lam)
    # candidate potential (1/m) log sum lambda_J |s_J|^2 over the
    # reference-orthonormal sections s_J = z^J / sqrt(gram_J)
    z = basis.log_weights(t) + (np.log(lam) - np.log(basis.gram_diag))[None, :]
    cand = logsumexp(z, axis=1) / m
    target = phi.value(t) - float(np.max(phi.value(t)))
    gap = float(np.max(np.abs(target - cand)))
    return {
        "lambdas": lam[order],
        "exponents": basis.exponents[order],
        "gap": gap,
        "H_diag": h_diag,
    }


def _probe_energy(model: ToricFanoModel, psi: InvariantPotential, halfwidth: float) -> float:
    """Volume-averaged I(psi) on a wide uniform log-coordinate grid.

    Uses the gradient route
        I = sum_{r<n} avg_int i dpsi ^ dbar psi ^ omega_psi^r ^ omega^{n-1-r},
    whose integrand is nonnegative and decays exponentially outside the
    transition region of the potential, so a trapezoid grid of halfwidth
    beyond the last softmax kink is accurate at any ray scale (the fixed
    moment-coordinate quadrature cannot resolve kinks at |t| >> 1).
    """
    n = model.n
    h = 0.1 if n == 1 else 0.5
    axis = np.arange(-halfwidth, halfwidth + 0.5 * h, h)
    if n == 1:
        t = axis[:, None]
    else:
        mesh = np.meshgrid(*([axis] * n), indexing="ij")
        t = np.stack([g.ravel() for g in mesh], axis=1)
    g = psi.grad(t)
    rank1 = np.einsum("mi,mj->mij", g, g)
    a_ref = model.base_hess(t)
    a_psi = a_ref + psi.hess(t)
    total = np.zeros(t.shape[0])
    for r in range(n):
        total += wedge_density([rank1, a_psi, a_ref], [1, r, n - 1 - r])
    raw = (2.0 * math.pi) ** n * h**n * float(np.sum(total))
    return raw / model.analytic_volume


def eigenvalue_control_probe(
    model: ToricFanoModel,
    m: int,
    k: int,
    n_rays: int = 200,
    s_values=None,
    seed: int = 0,
    supplied_bound: tuple[float, float] | None = None,
    i_floor: float = 1.0,
) -> dict:
    """Scatter of log(mu_1/mu_k) against I(psi_a) over rays of inner products.

    Rays are a(s) = diag(e^{s sigma_j}) in the reference-orthonormal basis
    (mu_j = e^{-s sigma_j}); sigma is drawn once per ray: normalized Gaussian
    directions plus one single-monomial ray per basis element.  For each
    sample the potential psi_a is built on the rescaled model and I(psi_a) is
    evaluated on a grid wide enough for the ray scale, so large s is safe.

    The fitted slope is the least Lambda such that
        logratio <= Lambda * I + C0   over all samples,
    with C0 the largest logratio among samples with I <= i_floor (small-s
    samples have logratio ~ s but I ~ s^2, so an intercept is essential).  A
    user-supplied (Lambda, C) pair is checked for violations if given.
    """
    basis = section_basis(model, m)
    nsec = basis.size
    # the control notion concerns 2 <= k <= n; on n = 1 we still allow k = 2
    # for data gathering (ratios beyond the n-range can grow at bounded I)
    if not (2 <= k <= max(model.n, 2)):
        raise ValueError(f"need 2 <= k <= {max(model.n, 2)}")
    if s_values is None:
        s_values = np.concatenate([np.linspace(0.0, 4.0, 9), [8.0, 16.0, 40.0]])
    rng = np.random.default_rng(seed)
    rays = []
    for j in range(min(nsec, max(0, n_rays // 10))):
        e = np.zeros(nsec)
        e[j] = 1.0
        rays.append(e)
    while len(rays) < n_rays:
        sigma = rng.standard_normal(nsec)
        sigma /= np.max(np.abs(sigma))
        rays.append(sigma)
    records = []
    for ray_id, sigma in enumerate(rays):
        for s in s_values:
            mu_log = -s * sigma
            mu_sorted = np.sort(mu_log)[::-1]
            logratio = float(mu_sorted[0] - mu_sorted[k - 1])
            inner = InnerProductDiagonal(diag=np.exp(np.clip(s * sigma, -700, 700)))
            psi, model_l = bergman_potential(model, m, inner)
            spread = float(np.max(sigma) - np.min(sigma))
            energy = _probe_energy(model_l, psi, halfwidth=s * spread + 30.0)
            records.append(
                {"ray": ray_id, "s": float(s), "logratio": logratio, "I": float(energy)}
            )
    base = [r["logratio"] for r in records if r["I"] <= i_floor]
    c0 = max(base) if base else 0.0
    slopes = [(r["logratio"] - c0) / r["I"] for r in records if r["I"] > i_floor]
    lam_fit = max(slopes) if slopes else 0.0
    out = {
        "records": records,
        "fitted": {"lam": float(max(lam_fit, 0.0)), "C": float(c0)},
        "m": m,
        "k": k,
        "n_rays": len(rays),
    }
    if supplied_bound is not None:
        lam_u, c_u = supplied_bound
        viol = [r for r in records if r["logratio"] > lam_u * r["I"] + c_u + 1e-12]
        out["supplied_violations"] = len(viol)
    return out
