"""Alpha-invariant thresholds from divergence of Bergman-density integrals.

For a subspace V of sections of the m-th anticanonical power with
orthonormalized density rho_V, the per-subspace threshold is

    alpha*(V) = sup { alpha > 0 : int_M rho_V^{-alpha/m} omega^n < infinity },

and alpha_{m,k} is the infimum of alpha*(V) over k-dimensional V.  On toric
models the integral transforms to moment coordinates, where the reference
determinant cancels and the integrand becomes an explicit product of powers
of the polytope coordinates; the only obstructions to convergence are zeros
of rho on polytope faces (monomial subspaces) or at interior points of the
torus (coefficient subspaces on n = 1).

The quadrature uses composite Gauss-Legendre panels in stick coordinates,
geometrically graded toward detected singular ends; the integral value at
grading depth L converges as L grows iff the integral is finite, so the
convergent/divergent decision reads off the inter-level growth ratio.  The
search over subspaces enumerates monomial k-subsets (conjecturally extremal
on toric models) and adds random probe subspaces; the reported alpha_{m,k}
is therefore an upper bound for the true infimum, believed sharp.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .geometry import ToricFanoModel, _gauss_01
from .bergman import SectionBasis, SectionSubspace, section_basis

__all__ = [
    "AlphaEstimate",
    "integral_vs_alpha",
    "lct_threshold",
    "alpha_mk_estimate",
    "classify_growth",
]

ALPHA_MAX = 3.0
RHO_FLOOR_LOG = math.log(1e-4)  # face counts as singular if rho drops this far
DIVERGENCE_RATIO = 1.5
CONVERGED_REL_INCREMENT = 1e-12


# ---------------------------------------------------------------------------
# graded panel quadrature on [0, 1]


def _panel_nodes(a: float, b: float, p: int) -> tuple[np.ndarray, np.ndarray]:
    y, w = _gauss_01(p)
    return a + (b - a) * y, (b - a) * w


def _graded_axis(level: int, p: int, sing_lo: bool, sing_hi: bool, plain: int = 4):
    """Composite nodes/weights on [0,1], geometrically graded toward marked ends.

    Panels double away from a singular end down to width 2^-level, plus a
    closing panel [0, 2^-level]; a regular end gets `plain` uniform panels.
    Refining `level` only adds panels near singular ends, so integral values
    at successive levels differ exactly by the newly resolved mass.
    """
    brk_lo = [0.0] + [2.0 ** (-j) for j in range(level, 0, -1)] if sing_lo else None
    brk_hi = [1.0 - 2.0 ** (-j) for j in range(1, level + 1)] + [1.0] if sing_hi else None
    if sing_lo and sing_hi:
        brk = brk_lo[:-1] + brk_hi
    elif sing_lo:
        brk = brk_lo[:-1] + list(np.linspace(0.5, 1.0, plain + 1))
    elif sing_hi:
        brk = list(np.linspace(0.0, 0.5, plain + 1))[:-1] + brk_hi
    else:
        brk = list(np.linspace(0.0, 1.0, 2 * plain + 1))
    nodes, weights = [], []
    for a, b in zip(brk[:-1], brk[1:]):
        y, w = _panel_nodes(a, b, p)
        nodes.append(y)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _graded_segment(a: float, b: float, level: int, p: int, sing_lo: bool, sing_hi: bool):
    y, w = _graded_axis(level, p, sing_lo, sing_hi)
    return a + (b - a) * y, (b - a) * w


def _dedupe(sorted_vals: list[float], tol: float) -> list[float]:
    out: list[float] = []
    for v in sorted_vals:
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# invariant pipeline: monomial subspaces, log rho polynomial in x


class _InvariantDensity:
    """log rho and quadrature grids for a torus-invariant subspace.

    rho(t) = sum_j c_j exp(<J_j, t> - m G(t)) transforms in moment
    coordinates to sum_j c_j prod_i x_i^{J_i} (c - S)^{d - |J|} / c^d times
    exp(-m chi) for a perturbed reference G = F + chi; substituting dt =
    dx / det D^2 F cancels the base determinant, leaving the perturbation
    ratio det D^2(F + chi)/det D^2 F as a bounded smooth factor.
    """

    def __init__(self, model: ToricFanoModel, m: int, exponents: np.ndarray, coeffs: np.ndarray, p: int = 8):
        self.model = model
        self.m = m
        self.exponents = np.asarray(exponents, dtype=float)
        self.logc = np.log(np.asarray(coeffs, dtype=float))
        self.degree = float(m * model.coefficient)
        self.p = p
        self._singular = self._detect_singular_ends()
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _log_rho_x(self, x: np.ndarray) -> np.ndarray:
        """log rho at moment-coordinate points x, stable down to the faces."""
        c = self.model.coefficient
        rem = c - np.sum(x, axis=1)
        logx = np.log(x)
        logrem = np.log(rem)
        js = self.exponents  # (k, n)
        z = (
            logx @ js.T
            + logrem[:, None] * (self.degree - np.sum(js, axis=1))[None, :]
            - self.degree * math.log(c)
            + self.logc[None, :]
        )
        out = logsumexp(z, axis=1)
        if self.model.perturbation is not None:
            t = self.model.inverse_moment_map(x)
            out = out - self.m * self.model.perturbation.value(t)
        return out

    def _log_jacobian_extra(self, x: np.ndarray) -> np.ndarray:
        """log of det D^2(F+chi)/det D^2 F for perturbed references (else 0)."""
        if self.model.perturbation is None:
            return np.zeros(x.shape[0])
        t = self.model.inverse_moment_map(x)
        base = self.model.base_det_hess_from_x(x)
        if self.model.n == 1:
            pert = self.model.ref_hess(t)[:, 0, 0]
        else:
            pert = np.linalg.det(self.model.ref_hess(t))
        return np.log(pert) - np.log(base)

    def _stick_to_x(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.model.coefficient
        n = self.model.n
        x = np.empty_like(s)
        rem = np.full(s.shape[0], c)
        logjac = np.zeros(s.shape[0])
        for i in range(n):
            x[:, i] = rem * s[:, i]
            logjac += np.log(rem)
            rem = rem * (1.0 - s[:, i])
        return x, logjac

    def _detect_singular_ends(self) -> list[tuple[bool, bool]]:
        """Probe each stick-cube face: singular iff log rho drops below the
        floor relative to the cube center (sampled on face corners too)."""
        n = self.model.n
        eps = 2.0 ** -24
        center = np.full(n, 0.5)
        ref = float(self._log_rho_x(self._stick_to_x(center[None, :])[0])[0])
        flags = []
        corners = list(itertools.product([eps, 0.5, 1.0 - eps], repeat=n - 1)) if n > 1 else [()]
        for axis in range(n):
            marks = []
            for end_val in (eps, 1.0 - eps):
                pts = []
                for rest in corners:
                    p = list(rest)
                    p.insert(axis, end_val)
                    pts.append(p)
                vals = self._log_rho_x(self._stick_to_x(np.asarray(pts))[0])
                marks.append(bool(np.min(vals) < ref + RHO_FLOOR_LOG))
            flags.append((marks[0], marks[1]))
        return flags

    def _grid(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached (log rho, log weight incl. jacobian) arrays at depth level."""
        if level not in self._cache:
            axes = [
                _graded_axis(level, self.p, lo, hi) for lo, hi in self._singular
            ]
            mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
            s = np.stack([g.ravel() for g in mesh], axis=1)
            wmesh = np.meshgrid(*[a[1] for a in axes], indexing="ij")
            logw = np.sum(np.log(np.stack([g.ravel() for g in wmesh], axis=1)), axis=1)
            x, logjac = self._stick_to_x(s)
            logrho = self._log_rho_x(x)
            logw = logw + logjac + self._log_jacobian_extra(x)
            self._cache[level] = (logrho, logw)
        return self._cache[level]

    def value(self, alpha: float, level: int) -> float:
        """(2 pi)^n int rho^{-alpha/m} omega^n at grading depth level."""
        logrho, logw = self._grid(level)
        with np.errstate(over="ignore"):
            total = np.exp(logsumexp(logw - (alpha / self.m) * logrho))
        return float((2.0 * math.pi) ** self.model.n * total)

    @property
    def node_count_hint(self) -> int:
        return int(np.prod([len(_graded_axis(10, self.p, lo, hi)[0]) for lo, hi in self._singular]))


# ---------------------------------------------------------------------------
# torus pipeline: n = 1 coefficient subspaces with interior zeros


class _TorusDensity1D:
    """log rho(x, theta) grids for a coefficient subspace on a 1-d model.

    The section polynomial s(z) = sum_J c_J z^J has zeros at points of the
    z-plane; each finite nonzero root maps to an interior singular point
    (x*, theta*) of the moment-coordinate chart, a root at z = 0 or a degree
    drop map to the faces x = 0 and x = c.  Both axes are partitioned at the
    singular locations and graded toward them.
    """

    def __init__(self, model: ToricFanoModel, m: int, coeffs: np.ndarray, p: int = 8):
        if model.n != 1:
            raise ValueError("torus pipeline is 1-d only")
        if model.perturbation is not None:
            raise NotImplementedError("coefficient probes use the base reference")
        self.model = model
        self.m = m
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.degree = round(m * model.coefficient)
        self.p = p
        c = model.coefficient
        roots = np.roots(self.coeffs[::-1]) if np.count_nonzero(self.coeffs) > 1 else np.array([])
        # multiple roots come back as near-identical clusters; dedupe well
        # above the root-finding error so no spurious micro-segment survives
        xs = [float(c * abs(z) ** 2 / (1.0 + abs(z) ** 2)) for z in roots if abs(z) > 0]
        self.x_marks = _dedupe(sorted({0.0, float(c)} | set(xs)), 1e-6)
        ths = sorted({float(np.angle(z)) % (2.0 * math.pi) for z in roots if abs(z) > 0})
        self.theta_marks = _dedupe(ths, 1e-6)
        # depth is capped: near a root |s(z)|^2 is evaluated by cancellation,
        # so nodes closer than ~2^-20 to the root lose relative accuracy
        self.levels = list(range(8, 21, _LEVEL_STEP))
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _log_rho(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        c = self.model.coefficient
        js = np.arange(self.degree + 1, dtype=float)
        logmod = 0.5 * (np.log(x)[:, None] - np.log(c - x)[:, None]) * js[None, :]
        shift = np.max(logmod, axis=1, keepdims=True)
        mono = np.exp(logmod - shift) * np.exp(1j * theta[:, None] * js[None, :])
        s = mono @ self.coeffs
        # log |s(z)|^2 e^{-m G}: e^{-mG} = ((c-x)/c)^{d} in moment coordinates
        quad = np.abs(s) ** 2
        return (
            np.log(np.maximum(quad, 1e-300))
            + 2.0 * shift[:, 0]
            + self.degree * (np.log(c - x) - math.log(c))
        )

    def _grid(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        if level not in self._cache:
            xs, wx = [], []
            for a, b in zip(self.x_marks[:-1], self.x_marks[1:]):
                y, w = _graded_segment(a, b, level, self.p, True, True)
                xs.append(y)
                wx.append(w)
            x = np.concatenate(xs)
            wxv = np.concatenate(wx)
            if self.theta_marks:
                tm = self.theta_marks + [self.theta_marks[0] + 2.0 * math.pi]
                ths, wt = [], []
                for a, b in zip(tm[:-1], tm[1:]):
                    y, w = _graded_segment(a, b, level, self.p, True, True)
                    ths.append(y)
                    wt.append(w)
                theta = np.concatenate(ths) % (2.0 * math.pi)
                wthv = np.concatenate(wt)
            else:
                theta, wthv = _panel_nodes(0.0, 2.0 * math.pi, 4 * self.p)
            xg, tg = np.meshgrid(x, theta, indexing="ij")
            wg = np.outer(wxv, wthv)
            logrho = self._log_rho(xg.ravel(), tg.ravel())
            self._cache[level] = (logrho, np.log(wg.ravel()))
        return self._cache[level]

    def value(self, alpha: float, level: int) -> float:
        logrho, logw = self._grid(level)
        with np.errstate(over="ignore"):
            total = np.exp(logsumexp(logw - (alpha / self.m) * logrho))
        return float(total)


# ---------------------------------------------------------------------------
# classification and bisection


def classify_growth(values, levels) -> str:
    """Convergent/divergent/unresolved from integral values at rising depth.

    Divergent on overflow or on the growth-ratio rule value(L+2)/value(L) >=
    1.5; convergent when increments die out or turn nonpositive.  In the
    remaining geometric regime the increments behave like L^q rho^L (the
    polynomial factor comes from several singular ends sharing the decay
    rate), so the log of successive increment ratios is extrapolated against
    1/L to remove the polynomial part; the sign of the extrapolated limit
    log rho decides (a flat increment tail, rho = 1, is the logarithmic
    divergence exactly at the threshold and counts as divergent).
    """
    v = np.asarray(values, dtype=float)
    ell = np.asarray(levels, dtype=float)
    if not np.all(np.isfinite(v)):
        return "divergent"
    if len(v) >= 3 and v[-1] / max(v[-3], 1e-300) >= DIVERGENCE_RATIO:
        return "divergent"
    inc = np.diff(v)
    if abs(inc[-1]) <= CONVERGED_REL_INCREMENT * abs(v[-1]):
        return "convergent"
    tail = inc[-4:] if len(inc) >= 4 else inc
    if np.any(tail <= 0):
        return "convergent"
    ratios = tail[1:] / tail[:-1]
    if len(ratios) < 2:
        return "unresolved"
    if np.max(ratios) / np.min(ratios) > 2.0:
        return "unresolved"
    # level label of each ratio: the level ending the earlier increment
    lr = np.log(ratios)
    lab = ell[-len(tail):-1]
    coef = np.polynomial.polynomial.polyfit(1.0 / lab, lr, 1)
    intercept = float(coef[0]) / (ell[-1] - ell[-2])  # per single level
    return "divergent" if intercept >= -1e-4 else "convergent"


_LEVEL_STEP = 2


def _levels_for(n: int) -> list[int]:
    if n == 1:
        return list(range(8, 27, _LEVEL_STEP))
    if n == 2:
        return list(range(6, 19, _LEVEL_STEP))
    return list(range(4, 13, _LEVEL_STEP))


def _density_for(model: ToricFanoModel, m: int, subspace: SectionSubspace, p: int = 8):
    basis = subspace.basis
    if subspace.is_monomial:
        cols = np.argmax(subspace.coeffs != 0, axis=0)
        # orthonormalized density: coefficient 1/gram per selected monomial
        # (column scalings drop out of the span and of the threshold)
        coeffs = 1.0 / basis.gram_diag[cols]
        return _InvariantDensity(model, m, basis.exponents[cols], coeffs, p=p)
    if model.n != 1:
        raise NotImplementedError("coefficient subspaces are probed on n = 1 only")
    if subspace.dim != 1:
        raise NotImplementedError("torus probes are rank one")
    return _TorusDensity1D(model, m, subspace.coeffs[:, 0], p=p)


def integral_vs_alpha(
    model: ToricFanoModel, m: int, subspace: SectionSubspace, alpha: float, level: int
) -> float:
    """Value of int rho_V^{-alpha/m} omega^n at grading depth `level`.

    Overflowing values are returned as inf (divergence evidence, not error).
    """
    return _density_for(model, m, subspace).value(alpha, level)


@dataclass
class ThresholdResult:
    threshold: float
    bracket: tuple[float, float]
    verdict: str  # "resolved", "unresolved", or "no-divergence"
    unresolved_probes: int = 0

    @property
    def finite(self) -> bool:
        return self.verdict != "no-divergence"


def lct_threshold(
    model: ToricFanoModel,
    m: int,
    subspace: SectionSubspace,
    alpha_max: float = ALPHA_MAX,
    width: float = 0.01,
    p: int = 8,
) -> ThresholdResult:
    """Divergence threshold of the density integral, bisected to `width`.

    Returns the bracket midpoint; base-point-free subspaces (no divergence up
    to alpha_max) report verdict "no-divergence" with threshold inf.
    """
    dens = _density_for(model, m, subspace, p=p)
    levels = getattr(dens, "levels", None) or _levels_for(model.n)
    unresolved = 0

    def classify(alpha: float) -> str:
        nonlocal unresolved
        vals = [dens.value(alpha, lv) for lv in levels]
        verdict = classify_growth(vals, levels)
        if verdict == "unresolved":
            deeper = [lv + 2 * _LEVEL_STEP for lv in levels[-3:]]
            verdict = classify_growth(
                vals + [dens.value(alpha, lv) for lv in deeper], list(levels) + deeper
            )
            if verdict == "unresolved":
                unresolved += 1
        return verdict

    if classify(alpha_max) == "convergent":
        return ThresholdResult(math.inf, (alpha_max, math.inf), "no-divergence")
    lo, hi = 0.0, alpha_max
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if classify(mid) == "convergent":
            lo = mid
        else:
            hi = mid
    verdict = "resolved" if unresolved == 0 else "unresolved"
    return ThresholdResult(0.5 * (lo + hi), (lo, hi), verdict, unresolved)


# ---------------------------------------------------------------------------
# search over subspaces


@dataclass
class AlphaEstimate:
    """Upper-bound estimate of alpha_{m,k} with search provenance.

    The estimate is the minimum threshold over the searched set (all monomial
    k-subsets plus random probes); a minimum over part of the Grassmannian
    can only exceed the true infimum, so this is an upper bound, believed
    sharp when monomial subspaces are extremal.
    """

    m: int
    k: int
    estimate: float
    bracket: tuple[float, float]
    extremal: tuple
    per_subspace: dict = field(repr=False)
    monomial_count: int = 0
    random_probe_count: int = 0
    random_probe_min: float = math.inf
    partial: bool = False
    unresolved: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "estimate": self.estimate,
            "bracket": list(self.bracket),
            "extremal": list(self.extremal),
            "monomial_count": self.monomial_count,
            "random_probe_count": self.random_probe_count,
            "random_probe_min": self.random_probe_min,
            "partial": self.partial,
            "bound_direction": "upper",
            "per_subspace": {str(k): v for k, v in self.per_subspace.items()},
        }


def _random_probe(basis: SectionBasis, k: int, rng: np.random.Generator) -> SectionSubspace:
    n = basis.model.n
    if n == 1 and k == 1:
        coeffs = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
        return SectionSubspace(basis=basis, coeffs=coeffs[:, None])
    idx = rng.choice(basis.size, size=k, replace=False)
    c = np.zeros((basis.size, k))
    for col, i in enumerate(sorted(idx)):
        c[i, col] = math.exp(rng.uniform(-1.0, 1.0))
    return SectionSubspace(basis=basis, coeffs=c)


def alpha_mk_estimate(
    model: ToricFanoModel,
    m: int,
    k: int,
    n_random: int = 10,
    seed: int = 0,
    max_subspaces: int = 400,
    width: float = 0.01,
) -> AlphaEstimate:
    """Estimate alpha_{m,k}: enumerate monomial k-subsets, add random probes.

    Monomial subsets beyond `max_subspaces` are subsampled deterministically
    from the seed and the result is flagged partial.
    """
    basis = section_basis(model, m)
    if not 1 <= k <= basis.size:
        raise ValueError(f"need 1 <= k <= {basis.size}")
    subsets = list(itertools.combinations(range(basis.size), k))
    rng = np.random.default_rng(seed)
    partial = False
    if len(subsets) > max_subspaces:
        pick = rng.choice(len(subsets), size=max_subspaces, replace=False)
        subsets = [subsets[i] for i in sorted(pick)]
        partial = True
    per: dict = {}
    unresolved = []
    best = (math.inf, None, None)
    for idx in subsets:
        sub = SectionSubspace.monomials(basis, list(idx))
        res = lct_threshold(model, m, sub, width=width)
        label = tuple(tuple(int(v) for v in basis.exponents[i]) for i in idx)
        per[label] = {"threshold": res.threshold, "bracket": res.bracket, "verdict": res.verdict}
        if res.verdict == "unresolved":
            unresolved.append(label)
        if res.threshold < best[0]:
            best = (res.threshold, label, res.bracket)
    probe_min = math.inf
    probes = 0
    for i in range(n_random):
        sub = _random_probe(basis, k, rng)
        try:
            res = lct_threshold(model, m, sub, width=width)
        except NotImplementedError:
            continue
        probes += 1
        label = f"probe-{i}"
        per[label] = {"threshold": res.threshold, "bracket": res.bracket, "verdict": res.verdict}
        probe_min = min(probe_min, res.threshold)
        if res.threshold < best[0]:
            best = (res.threshold, label, res.bracket)
    estimate, extremal, bracket = best
    return AlphaEstimate(
        m=m,
        k=k,
        estimate=estimate,
        bracket=bracket if bracket is not None else (math.inf, math.inf),
        extremal=extremal if isinstance(extremal, tuple) else (extremal,),
        per_subspace=per,
        monomial_count=len(subsets),
        random_probe_count=probes,
        random_probe_min=probe_min,
        partial=partial,
        unresolved=unresolved,
    )
