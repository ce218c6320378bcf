"""Numerical certificates for the inequalities and regularity estimates.

Spectral norms use the FFT convention u_hat(xi) = h^d sum_x u(x) e^(-2 pi i xi.x)
over the grid box of side lengths L, so that Parseval reads
sum_x |u|^2 h^d = sum_xi |u_hat|^2 / L^d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (CoercivityViolationError, InequalityViolationError, InvalidArgumentError,
                     InvalidCutoffError)
from .geometry import DomainMask, Grid, cone_tail_mass
from .kernels import FractionalCone, KernelSpec
from .operators import (GridField, _neighbor, _Pairs, _proj, assemble_stiffness, effective_radius,
                        lattice_offsets, lattice_symbol, spectral_energy)
from .solver import conjugate_gradient, solve_dirichlet
from .symbol import psi_max, psi_min, tail_symbol_field


# ---------------------------------------------------------------------------
# fractional seminorms


def _spectrum(u: GridField):
    g = u.grid
    uh = np.fft.fftn(u.values, axes=tuple(range(1, g.d + 1))) * g.cell_volume
    xi = np.sqrt(np.sum(g.frequencies() ** 2, axis=0))
    return uh, xi


def hs_seminorm(u: GridField, sigma: float) -> float:
    """Squared seminorm sum_xi |xi|^(2 sigma) |u_hat(xi)|^2 / L^d over all components.

    The grid is treated as periodic (bounded grids are embedded in their box).
    """
    if not 0.0 < sigma < 2.0:
        raise InvalidArgumentError(f"sigma must lie in (0, 2), got {sigma}")
    uh, xi = _spectrum(u)
    w = xi ** (2 * sigma)
    return float(np.sum(w * np.abs(uh) ** 2)) / float(np.prod(u.grid.lengths))


def hs_norm(u: GridField, sigma: float) -> float:
    """sqrt(|u|_L2^2 + |u|_H^sigma^2)."""
    return math.sqrt(u.l2_norm() ** 2 + hs_seminorm(u, sigma))


def fractional_laplacian(u: GridField, s: float) -> GridField:
    """(-Delta)^s componentwise via the multiplier |2 pi xi|^(2s)."""
    g = u.grid
    axes = tuple(range(1, g.d + 1))
    xi = np.sqrt(np.sum(g.frequencies() ** 2, axis=0))
    vh = np.fft.fftn(u.values, axes=axes) * (2 * math.pi * xi) ** (2 * s)
    return GridField(g, np.fft.ifftn(vh, axes=axes).real)


def lp_norm(u: GridField, p: float) -> float:
    """Grid L^p norm of the pointwise Euclidean length."""
    mag = np.sqrt(np.sum(u.values ** 2, axis=0))
    if math.isinf(p):
        return float(mag.max())
    return float(np.sum(mag ** p) * u.grid.cell_volume) ** (1.0 / p)


def gagliardo_seminorm(u: GridField, sigma: float, radius: float = 8.0) -> float:
    """Real-space double sum of |u(x) - u(y)|^2 / |x - y|^(d + 2 sigma) h^2d for periodic u.

    Offsets with |x - y| < ``radius`` (in box lengths) are summed on the
    lattice; beyond that u(y) is replaced by its mean statistics, which
    gives the closed-form tail sigma_(d-1) R^(-2 sigma) / (2 sigma) times
    sum_x (|u(x)|^2 - 2 u(x).mean(u) + mean(|u|^2)) h^d.
    """
    g = u.grid
    if not g.periodic:
        raise InvalidArgumentError("the periodic Gagliardo sum needs a periodic grid")
    R = radius * float(np.min(g.lengths))
    U = u.values
    total = 0.0
    J, H = lattice_offsets(g, R)
    for j, h in zip(J, H):
        diff = U - np.roll(U, shift=tuple(int(v) for v in j), axis=tuple(range(1, g.d + 1)))
        total += float(np.sum(diff ** 2)) * float(h @ h) ** (-(g.d + 2 * sigma) / 2)
    total *= g.cell_volume ** 2
    area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[g.d]
    axes = tuple(range(1, g.d + 1))
    mean = U.mean(axis=axes)
    sq = np.sum(U ** 2, axis=0)
    far = float(np.sum(sq - 2 * np.tensordot(mean, U, axes=(0, 0)) + sq.mean())) * g.cell_volume
    return total + far * area * R ** (-2 * sigma) / (2 * sigma)


# ---------------------------------------------------------------------------
# Korn equivalence


@dataclass
class KornReport:
    C1_est: float
    C2_est: float
    beta_r: float
    fields_tested: int
    worst_case_field: str
    lower_reference: Optional[float] = None
    upper_reference: Optional[float] = None
    ratios: dict = field(default_factory=dict)

    def to_dict(self):
        return {"C1_est": self.C1_est, "C2_est": self.C2_est, "beta_r": self.beta_r,
                "fields_tested": self.fields_tested, "worst_case_field": self.worst_case_field,
                "lower_reference": self.lower_reference, "upper_reference": self.upper_reference}


def korn_field_suite(grid: Grid, n_random: int = 50, seed: int = 0, band: int = 4,
                     noise_levels: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> dict:
    """Band-limited random vector fields plus near-rigid fields (constant + small noise)."""
    if not grid.periodic:
        raise InvalidArgumentError("the Korn field suite lives on periodic grids")
    rng = np.random.default_rng(seed)
    X = grid.coordinates() / grid.lengths.reshape((-1,) + (1,) * grid.d)
    modes = np.stack(np.meshgrid(*[np.arange(-band, band + 1)] * grid.d, indexing="ij"), -1).reshape(-1, grid.d)
    modes = modes[np.any(modes != 0, axis=1)]

    def random_field():
        out = np.zeros((grid.d, *grid.shape))
        for k in modes:
            phase = 2 * math.pi * np.tensordot(k, X, axes=(0, 0))
            amp = rng.standard_normal((grid.d, 2)) / (1.0 + float(k @ k))
            out += amp[:, 0, None].reshape((-1,) + (1,) * grid.d) * np.cos(phase)
            out += amp[:, 1, None].reshape((-1,) + (1,) * grid.d) * np.sin(phase)
        return out

    suite = {f"random-{i:02d}": GridField(grid, random_field()) for i in range(n_random)}
    for j, eps in enumerate(noise_levels):
        const = rng.standard_normal(grid.d).reshape((-1,) + (1,) * grid.d)
        suite[f"near-rigid-{eps:g}"] = GridField(grid, const + eps * random_field())
    return suite


def korn_equivalence(spec: FractionalCone, grid: Grid, field_suite: Optional[dict] = None, seed: int = 0,
                     tol: float = 0.05, check_reference: bool = True) -> KornReport:
    """Tightest C1, C2 with C1 [u,u]_S <= |u|_H^s^2 <= C2 ([u,u]_S + beta(r) |u|^2) over the suite.

    The lattice energy is evaluated through its exact multiplier; for
    kernels of infinite range the interactions beyond half the box are
    added through the tail symbol.  With ``check_reference`` the
    estimates are compared against 1/(2 alpha2 Psi_max) and
    1/(2 alpha1 Psi_min) (times max(1, 4 alpha2) for truncated kernels).
    """
    if not isinstance(spec, FractionalCone):
        raise InvalidArgumentError("Korn equivalence is stated for fractional cone kernels")
    if not grid.periodic:
        raise InvalidArgumentError("Korn equivalence is evaluated on periodic grids")
    suite = field_suite if field_suite is not None else korn_field_suite(grid, seed=seed)
    if len(suite) == 0:
        raise InvalidArgumentError("empty field suite")
    Mh = lattice_symbol(spec, grid)
    R = effective_radius(spec, grid)
    if math.isinf(spec.r):
        Mh = Mh + tail_symbol_field(spec, grid, R)
        beta = 0.0
    else:
        beta = cone_tail_mass(spec.cone, spec.s, spec.r)
    lows, highs = {}, {}
    for name, u in suite.items():
        S = spectral_energy(u, Mh)
        H = hs_seminorm(u, spec.s)
        L2 = u.l2_norm() ** 2
        if S > 0:
            lows[name] = H / S
        denom = S + beta * L2
        if denom > 0:
            highs[name] = H / denom
    if not lows:
        raise InvalidArgumentError("no field in the suite has positive energy")
    c1 = min(lows.values())
    c2 = max(highs.values())
    worst = max(highs, key=highs.get)
    # with beta > 0 the measured upper ratio may fall below the lower one; any
    # larger C2 still certifies, so report C2 >= C1
    c2 = max(c2, c1)
    lower_ref = upper_ref = None
    if check_reference:
        pmin = psi_min(spec.cone, spec.s).value
        pmax = psi_max(spec.cone, spec.s).value
        lower_ref = 1.0 / (2 * spec.alpha2 * pmax)
        upper_ref = 1.0 / (2 * spec.alpha1 * pmin)
        if beta > 0:
            upper_ref *= max(1.0, 4 * spec.alpha2)
        if c1 < lower_ref * (1 - tol):
            bad = min(lows, key=lows.get)
            raise InequalityViolationError(
                f"field {bad}: |u|_H^s^2 / [u,u]_S = {c1:.6g} is below the reference {lower_ref:.6g}", field_id=bad)
        if c2 > upper_ref * (1 + tol):
            raise InequalityViolationError(
                f"field {worst}: ratio {c2:.6g} exceeds the reference {upper_ref:.6g}", field_id=worst)
    return KornReport(c1, c2, beta, len(suite), worst, lower_ref, upper_ref,
                      {"lower": lows, "upper": highs})


# ---------------------------------------------------------------------------
# Poincare-Korn constant


@dataclass
class PKResult:
    C_P: float
    lambda_min: float
    iterations: int
    residual: float
    eigenvector: np.ndarray


def pk_constant(spec: KernelSpec, mask: DomainMask, tol: float = 1e-8, max_iter: int = 500, return_info: bool = False, seed: int = 0):
    """C_P = 1 / lambda_min of [.,.]_S against the mass h^d on interior DOFs.

    Inverse iteration until the eigen-residual is at most ``tol`` or
    ``max_iter`` steps; each step solves with CG, which raises a coercivity
    violation if the seminorm matrix is not positive definite.
    """
    A = assemble_stiffness(spec, mask, part="sym")
    K = 2.0 * A.matrix
    hd = mask.grid.cell_volume
    n = K.shape[0]
    rng = np.random.default_rng(seed)
    v = np.ones(n) + 0.1 * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam, res = math.nan, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        w, _, _ = conjugate_gradient(K, hd * v, tol=1e-12, max_iter=20 * n)
        nw = np.linalg.norm(w)
        if nw == 0:
            raise CoercivityViolationError("inverse iteration collapsed to zero")
        v = w / nw
        Kv = K @ v
        lam = float(v @ Kv) / hd
        res = float(np.linalg.norm(Kv - lam * hd * v) / max(np.linalg.norm(Kv), 1e-300))
        if res <= tol:
            break
    if not lam > 0:
        raise CoercivityViolationError(f"smallest eigenvalue {lam:.3e} is not positive")
    out = PKResult(1.0 / lam, lam, it, res, v)
    return out if return_info else out.C_P


# ---------------------------------------------------------------------------
# rigid motions


@dataclass
class RigidFit:
    is_rigid: bool
    A: np.ndarray
    b: np.ndarray
    residual: float
    max_projected_difference: float


def rigid_motion_test(u: GridField, tol: float, n_pairs: int = 4000, seed: int = 0) -> RigidFit:
    """Least-squares fit u ~ A x + b with A skew, plus a sampled-pair strain check.

    Rigid iff the fit residual is at most tol |u| and max |D(u)| over the
    sampled pairs is at most tol.
    """
    g = u.grid
    d = g.d
    pts = g.points()
    vals = u.values.reshape(d, -1).T
    if u.mask is not None:
        keep = u.mask.inside.ravel()
        pts, vals = pts[keep], vals[keep]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    N = len(pts)
    cols = []
    for i, j in pairs:
        # E_ij x has x_j in row i and -x_i in row j
        c = np.zeros((N, d))
        c[:, i] = pts[:, j]
        c[:, j] = -pts[:, i]
        cols.append(c.ravel())
    for a in range(d):
        c = np.zeros((N, d))
        c[:, a] = 1.0
        cols.append(c.ravel())
    G = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(G, vals.ravel(), rcond=None)
    A = np.zeros((d, d))
    for (i, j), c in zip(pairs, coef[:len(pairs)]):
        A[i, j], A[j, i] = c, -c
    b = coef[len(pairs):]
    resid = float(np.linalg.norm(G @ coef - vals.ravel()))
    unorm = float(np.linalg.norm(vals))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, N, n_pairs)
    j = rng.integers(0, N, n_pairs)
    ok = i != j
    h = pts[i[ok]] - pts[j[ok]]
    D = np.sum((vals[i[ok]] - vals[j[ok]]) * h, axis=1) / np.sqrt(np.sum(h * h, axis=1))
    maxD = float(np.max(np.abs(D))) if D.size else 0.0
    rigid = resid <= tol * unorm and maxD <= tol
    return RigidFit(bool(rigid), A, b, resid / unorm if unorm > 0 else 0.0, maxD)


# ---------------------------------------------------------------------------
# cutoffs and localization


def smoothstep_profile(X: np.ndarray, center, r_in: float, r_out: float) -> np.ndarray:
    """eta = 1 on |x - c| <= r_in, 0 on |x - c| >= r_out, quintic smoothstep between.

    ``X`` holds coordinates of shape (d, *n).
    """
    if not 0 <= r_in < r_out:
        raise InvalidArgumentError(f"need 0 <= r_in < r_out, got {r_in}, {r_out}")
    d = X.shape[0]
    c = np.broadcast_to(np.asarray(center, dtype=float), (d,)).reshape((-1,) + (1,) * d)
    dist = np.sqrt(np.sum((X - c) ** 2, axis=0))
    t = np.clip((r_out - dist) / (r_out - r_in), 0.0, 1.0)
    return t ** 3 * (10 - 15 * t + 6 * t * t)


def smoothstep_cutoff(grid: Grid, center, r_in: float, r_out: float) -> np.ndarray:
    """The smoothstep profile sampled on ``grid``."""
    return smoothstep_profile(grid.coordinates(), center, r_in, r_out)


@dataclass
class LocalizationResult:
    g: GridField
    I1: GridField
    I2: GridField
    g_norm: float
    u_hs_norm: float
    constants: dict


def _validate_cutoff(eta, grid, mask):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != grid.shape:
        raise InvalidCutoffError(f"cutoff shape {eta.shape} does not match grid {grid.shape}")
    if mask is not None and np.any(eta[~mask.inside] != 0):
        raise InvalidCutoffError("cutoff support touches the exterior of the domain")
    return eta


def localization_residual(spec: KernelSpec, u: GridField, eta, mask: Optional[DomainMask] = None,
                          sigma: Optional[float] = None) -> LocalizationResult:
    """g = (L eta) u - I_s(u, eta) with both lattice sums taken over y != x.

    (L eta)(x) = sum_y k(x,y) (eta(x) - eta(y)) h^ h^T h^d and
    I_s(x) = sum_y k(x,y) (eta(x) - eta(y)) D(u)(x,y) h^ h^d.  The y-sum is
    split into y inside the mask (I1 piece) and outside (I2 piece).
    """
    g = u.grid
    mask = mask if mask is not None else u.mask
    eta = _validate_cutoff(eta, g, mask)
    sigma = sigma if sigma is not None else getattr(spec, "s", 0.5)
    U = u.values
    parts = [np.zeros_like(U), np.zeros_like(U)]
    inside = mask.inside if mask is not None else np.ones(g.shape, dtype=bool)
    hd = g.cell_volume
    for J, h, hn, region, kxy, _ in _Pairs(spec, g):
        Uy, reg = _neighbor(U, J, g.periodic)
        Ey, _ = _neighbor(eta[None], J, g.periodic)
        Iy, _ = _neighbor(inside[None], J, g.periodic)
        Ux = U[(slice(None),) + reg]
        de = eta[reg] - Ey[0]
        # (eta(x) - eta(y)) [u(x).h^ - D(u)] = (eta(x) - eta(y)) u(y).h^
        term = kxy * de * _proj(Uy, hn) * hd
        contrib = np.multiply.outer(hn, term)
        sel = Iy[0]
        parts[0][(slice(None),) + reg] += np.where(sel, contrib, 0.0)
        parts[1][(slice(None),) + reg] += np.where(sel, 0.0, contrib)
    I1, I2 = GridField(g, parts[0]), GridField(g, parts[1])
    gfield = GridField(g, parts[0] + parts[1])
    un = hs_norm(u, sigma)
    cons = {"C": gfield.l2_norm() / un if un > 0 else 0.0,
            "C_I1": I1.l2_norm() / un if un > 0 else 0.0,
            "C_I2": I2.l2_norm() / un if un > 0 else 0.0,
            "sigma": sigma}
    return LocalizationResult(gfield, I1, I2, gfield.l2_norm(), un, cons)


def localization_terms(spec: KernelSpec, u: GridField, eta):
    """Separate ((L eta) u, I_s) fields, for checks of the two pieces."""
    g = u.grid
    U = u.values
    Leta_u = np.zeros_like(U)
    Is = np.zeros_like(U)
    hd = g.cell_volume
    for J, h, hn, region, kxy, _ in _Pairs(spec, g):
        Uy, reg = _neighbor(U, J, g.periodic)
        Ey, _ = _neighbor(np.asarray(eta)[None], J, g.periodic)
        Ux = U[(slice(None),) + reg]
        de = np.asarray(eta)[reg] - Ey[0]
        Leta_u[(slice(None),) + reg] += np.multiply.outer(hn, kxy * de * _proj(Ux, hn) * hd)
        Is[(slice(None),) + reg] += np.multiply.outer(hn, kxy * de * _proj(Ux - Uy, hn) * hd)
    return GridField(g, Leta_u), GridField(g, Is)


# ---------------------------------------------------------------------------
# interior regularity


@dataclass
class RegularityReport:
    s: float
    p: float
    levels: list
    cutoff_id: str
    passed: bool
    lp_evidence: Optional[float] = None

    @property
    def ratios(self):
        return [lv["ratio"] for lv in self.levels]

    @property
    def local_norm(self):
        return self.levels[-1]["local_norm"]

    @property
    def f_norm(self):
        return self.levels[-1]["f_norm"]

    @property
    def ratio(self):
        return self.levels[-1]["ratio"]

    def to_dict(self):
        return {"s": self.s, "p": self.p, "cutoff_id": self.cutoff_id, "passed": self.passed,
                "lp_evidence": self.lp_evidence, "levels": self.levels}


def critical_exponent(d: int, s: float) -> float:
    """2*_s = 2d / (d - 2s), infinite when d <= 2s."""
    return math.inf if d <= 2 * s else 2 * d / (d - 2 * s)


def interior_regularity_study(spec: KernelSpec, f: Callable, domain, eta: Callable, p: float = 2.0,
                              levels: Sequence[float] = (1 / 64, 1 / 128, 1 / 256), collar: Optional[float] = None,
                              lp_evidence: Optional[float] = None, cutoff_id: str = "eta", tol: float = 1e-10,
                              bound: float = 2.0) -> RegularityReport:
    """Solve the zero-data problem on refining grids and measure eta u in H^2s or L^(2s,p).

    ``f(X)`` and ``eta(X)`` take coordinates of shape (d, *n) and return a
    field of shape (d, *n) and a scalar field of shape (*n); ``domain`` is
    a box ``(lo, hi)``.  The study passes when max/min of the ratios over
    the two finest levels is at most ``bound``.
    """
    s = getattr(spec, "s", None)
    if s is None:
        raise InvalidArgumentError("regularity studies need a kernel of fixed order s")
    d = spec.d
    if p < 2:
        raise InvalidArgumentError(f"p must be at least 2, got {p}")
    pcrit = critical_exponent(d, s)
    if p > pcrit + 1e-12 and lp_evidence is None:
        raise InvalidArgumentError(
            f"p = {p} exceeds 2*_s = {pcrit}; supply the measured L^p norm of u as evidence")
    lo, hi = domain
    if collar is None:
        if math.isinf(spec.radius):
            raise InvalidArgumentError("kernels of infinite range need an explicit collar")
        collar = spec.radius
    rows = []
    for h in levels:
        grid = Grid.covering(lo, hi, h, collar)
        mask = DomainMask.box(grid, lo, hi)
        X = grid.coordinates()
        fld = GridField(grid, np.broadcast_to(f(X), (d, *grid.shape)), mask)
        e = _validate_cutoff(eta(X), grid, mask)
        rep = solve_dirichlet(spec, fld, mask, tol=tol)
        eu = GridField(grid, rep.solution.values * e[None])
        if p == 2:
            local = math.sqrt(hs_seminorm(eu, 2 * s))
            fn = fld.l2_norm()
        else:
            local = lp_norm(fractional_laplacian(eu, s), p)
            fn = lp_norm(fld, p)
        rows.append({"h": h, "local_norm": local, "f_norm": fn, "ratio": local / fn,
                     "iterations": rep.iterations, "residual": rep.residual_norm,
                     "u_lp": lp_norm(rep.solution, p)})
    top = [r["ratio"] for r in rows[-2:]]
    passed = max(top) / min(top) <= bound if min(top) > 0 else False
    return RegularityReport(s, p, rows, cutoff_id, bool(passed), lp_evidence)
