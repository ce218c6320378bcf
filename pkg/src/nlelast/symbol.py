"""Fourier symbols of even translation-invariant kernels.

For a kernel k(h) the symbol is the d x d matrix

    M(xi) = int k(h) 2 (1 - cos(2 pi xi . h)) h^ h^T dh,

so that [u, u]_S = sum over frequencies of u_hat^* M u_hat.  The operator
L_n (see :mod:`nlelast.operators`) has symbol M/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import InvalidArgumentError, SingularFrequencyError, UnsupportedKernelError
from .geometry import DoubleCone, Grid, direction_rule
from .kernels import FractionalCone, KernelSpec
from .quadrature import _gauss, cos_moment, radial_cos_moment, graded_rule

DEFAULT_DIRECTIONS = {1: 2, 2: 1024, 3: 128}


@dataclass(frozen=True, eq=False)
class SymbolMatrix:
    xi: np.ndarray
    entries: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.entries + self.entries.T))

    def is_valid(self, tol=1e-10) -> bool:
        M = self.entries
        sym = np.max(np.abs(M - M.T)) <= 1e-12 * max(1.0, np.max(np.abs(M)))
        return bool(sym and self.eigenvalues[0] >= -tol * max(np.trace(M), 1e-300))


@dataclass(frozen=True)
class EllConstants:
    ell1: float
    ell2: float
    s: float
    d: int
    quad_resolution: dict = field(default_factory=dict)
    note: str = ""

    def matrix(self, xi) -> np.ndarray:
        """|xi|^2s (ell1 I + ell2 xi^ xi^T)."""
        xi = np.asarray(xi, dtype=float)
        n = np.linalg.norm(xi)
        if n == 0:
            return np.zeros((self.d, self.d))
        e = xi / n
        return n ** (2 * self.s) * (self.ell1 * np.eye(self.d) + self.ell2 * np.outer(e, e))


def _require_even_ti(spec: KernelSpec):
    if not spec.translation_invariant:
        raise UnsupportedKernelError("symbols exist only for translation-invariant kernels")
    if not spec.is_symmetric:
        raise UnsupportedKernelError("symbols are computed for even kernels only")


def _fast_path(spec) -> bool:
    return isinstance(spec, FractionalCone) and spec.m_homogeneous


def _directions(spec, n_dirs, xi=None):
    n = n_dirs or DEFAULT_DIRECTIONS[spec.d]
    breaks = ()
    if xi is not None and spec.d == 2:
        # |xi . w|^2s has a kink where w is perpendicular to xi
        phi = math.atan2(xi[1], xi[0])
        breaks = (phi + math.pi / 2, phi - math.pi / 2)
    return direction_rule(spec.direction_sets(), n, breaks=breaks)


def _fast_matrices(spec: FractionalCone, XI, dirs, wd, radius=None, lower=None):
    """Sum_w w m(w) w w^T 2 int_lower^radius (1 - cos(2 pi xi.w t)) t^(-1-2s) dt for rows of XI."""
    r = spec.r if radius is None else radius
    a = 2 * math.pi * np.abs(XI @ dirs.T)  # (nxi, ndir)
    rad = radial_cos_moment(a, r, spec.s)
    if lower is not None:
        rad = rad - radial_cos_moment(a, lower, spec.s)
    coef = 2 * rad * (wd * spec.m_values(dirs))[None, :]
    return np.einsum("kw,wa,wb->kab", coef, dirs, dirs)


def _general_matrix(spec, xi, dirs, wd, lo=0.0, hi=None):
    hi = spec.radius if hi is None else hi
    if math.isinf(hi):
        raise UnsupportedKernelError(
            "symbols of kernels with infinite range need a degree-0 homogeneous m")
    omega = 2 * math.pi * float(np.max(np.abs(dirs @ xi))) if len(dirs) else 0.0
    pts = sorted({lo, hi, *[b for b in spec.radial_breaks() if lo < b < hi]})
    t_all, w_all = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        if a == 0.0:
            t, w = graded_rule(b, shells=40, p=10, omega=omega)
        else:
            m = 10 + int(math.ceil(0.8 * omega * (b - a)))
            x, ww = _gauss(m)
            t, w = 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * ww
        t_all.append(t)
        w_all.append(w)
    t, w = np.concatenate(t_all), np.concatenate(w_all)
    H = t[None, :, None] * dirs[:, None, :]
    k = spec.profile(H.reshape(-1, spec.d)).reshape(H.shape[:2])
    phase = 2 * math.pi * (dirs @ xi)[:, None] * t[None, :]
    radial = np.sum(k * 4 * np.sin(0.5 * phase) ** 2 * (w * t ** (spec.d - 1))[None, :], axis=1)
    return np.einsum("w,wa,wb->ab", radial * wd, dirs, dirs)


def compute_symbol(spec: KernelSpec, xi, n_dirs: int = None) -> SymbolMatrix:
    """M(xi) for an even translation-invariant kernel by polar quadrature."""
    _require_even_ti(spec)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != spec.d:
        raise InvalidArgumentError(f"frequency must lie in R^{spec.d}")
    if not np.any(xi):
        return SymbolMatrix(xi, np.zeros((spec.d, spec.d)))
    dirs, wd = _directions(spec, n_dirs, xi)
    if _fast_path(spec):
        M = _fast_matrices(spec, xi[None, :], dirs, wd)[0]
    else:
        M = _general_matrix(spec, xi, dirs, wd)
    return SymbolMatrix(xi, 0.5 * (M + M.T))


def symbol_field(spec: KernelSpec, grid: Grid, n_dirs: int = None, chunk: int = 4096) -> np.ndarray:
    """M at every discrete frequency of a periodic grid, shape (d, d, *n)."""
    _require_even_ti(spec)
    F = grid.frequencies().reshape(grid.d, -1).T
    out = np.zeros((F.shape[0], grid.d, grid.d))
    dirs, wd = _directions(spec, n_dirs)
    if _fast_path(spec):
        for i in range(0, F.shape[0], chunk):
            out[i:i + chunk] = _fast_matrices(spec, F[i:i + chunk], dirs, wd)
    else:
        for i, xi in enumerate(F):
            if np.any(xi):
                out[i] = _general_matrix(spec, xi, dirs, wd)
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return np.moveaxis(out, 0, -1).reshape(grid.d, grid.d, *grid.shape)


def tail_symbol_field(spec: KernelSpec, grid: Grid, radius: float, n_dirs: int = None) -> np.ndarray:
    """M_inf - M_R at every discrete frequency (interactions with |h| >= R)."""
    _require_even_ti(spec)
    if not _fast_path(spec):
        raise UnsupportedKernelError("tail symbols are implemented for homogeneous fractional cone kernels")
    F = grid.frequencies().reshape(grid.d, -1).T
    dirs, wd = _directions(spec, n_dirs)
    out = _fast_matrices(spec, F, dirs, wd, radius=spec.r, lower=radius)
    return np.moveaxis(out, 0, -1).reshape(grid.d, grid.d, *grid.shape)


def apply_symbol(spec: KernelSpec, u, factor: float = 0.5, symbol=None):
    """Apply factor * M(xi) in frequency space (factor 1/2 reproduces L_n)."""
    from .operators import GridField

    g = u.grid
    if not g.periodic:
        raise InvalidArgumentError("spectral application needs a periodic grid")
    M = symbol_field(spec, g) if symbol is None else symbol
    axes = tuple(range(1, g.d + 1))
    uh = np.fft.fftn(u.values, axes=axes)
    fh = factor * np.einsum("ab...,b...->a...", M, uh)
    return GridField(g, np.fft.ifftn(fh, axes=axes).real)


# ---------------------------------------------------------------------------
# angular function


def _unit(v, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise InvalidArgumentError(f"{name} must be a unit vector, got norm {np.linalg.norm(v)}")
    return v


def _psi_rule(cone, nu, n_dirs):
    n = n_dirs or DEFAULT_DIRECTIONS[cone.d]
    breaks = ()
    if cone.d == 2:
        phi = math.atan2(nu[1], nu[0])
        breaks = (phi + math.pi / 2, phi - math.pi / 2)
    return direction_rule([cone], n, breaks=breaks)


def psi_matrix(cone: DoubleCone, s: float, nu, n_dirs: int = None) -> np.ndarray:
    """Q(nu) with eta^T Q eta = Psi(nu, eta)."""
    nu = _unit(nu, "nu")
    dirs, wd = _psi_rule(cone, nu, n_dirs)
    c = cos_moment(s) * (2 * math.pi) ** (2 * s)
    w = c * wd * np.abs(dirs @ nu) ** (2 * s)
    return np.einsum("w,wa,wb->ab", w, dirs, dirs)


def psi(cone: DoubleCone, s: float, nu, eta, n_dirs: int = None) -> float:
    """Psi(nu, eta) = C(s) (2 pi)^2s int over the cone's sphere trace of |nu.w|^2s (eta.w)^2."""
    eta = _unit(eta, "eta")
    return float(eta @ psi_matrix(cone, s, nu, n_dirs) @ eta)


@dataclass(frozen=True)
class PsiExtremum:
    value: float
    nu: np.ndarray
    eta: np.ndarray
    warning: str = ""


def _angles_to_unit(theta, d):
    if d == 1:
        return np.array([1.0])
    if d == 2:
        return np.array([math.cos(theta[0]), math.sin(theta[0])])
    a, b = theta
    return np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])


def _nu_grid(d, n):
    if d == 1:
        return [np.array([0.0])]
    if d == 2:
        # Psi(nu) = Psi(-nu): half circle suffices
        return [np.array([math.pi * k / n]) for k in range(n)]
    # Fibonacci points on the upper hemisphere
    k = np.arange(n) + 0.5
    z = 1 - k / n
    phi = math.pi * (1 + 5 ** 0.5) * k
    return [np.array([math.acos(zi), pi]) for zi, pi in zip(z, phi)]


@lru_cache(maxsize=64)
def _psi_extreme(cone, s, sign, n_grid, n_dirs):
    d = cone.d
    n_grid = n_grid or (64 if d == 2 else 1024)

    def objective(theta):
        lam = np.linalg.eigvalsh(psi_matrix(cone, s, _angles_to_unit(theta, d), n_dirs))
        return sign * (lam[0] if sign > 0 else lam[-1])

    cands = _nu_grid(d, n_grid)
    vals = [objective(t) for t in cands]
    best = cands[int(np.argmin(vals))]
    if d > 1:
        step = math.pi / n_grid if d == 2 else 2.0 / math.sqrt(n_grid)
        simplex = [best] + [best + step * e for e in np.eye(d - 1)]
        res = optimize.minimize(objective, best, method="Nelder-Mead",
                                options={"initial_simplex": np.array(simplex), "xatol": 1e-9, "fatol": 1e-14})
        if res.fun < min(vals):
            best = res.x
    nu = _angles_to_unit(best, d)
    lam, vec = np.linalg.eigh(psi_matrix(cone, s, nu, n_dirs))
    idx = 0 if sign > 0 else -1
    return PsiExtremum(float(lam[idx]), nu, vec[:, idx])


def psi_min(cone: DoubleCone, s: float, n_grid: int = None, n_dirs: int = None) -> PsiExtremum:
    """Minimum of Psi over unit pairs (nu, eta).

    For each nu the minimum over eta is the smallest eigenvalue of Q(nu);
    nu is scanned on a grid and refined by Nelder-Mead.
    """
    ext = _psi_extreme(cone, s, 1.0, n_grid, n_dirs)
    if ext.value < 1e-10:
        return PsiExtremum(ext.value, ext.nu, ext.eta,
                           "minimum below 1e-10: cone too thin for the direction resolution")
    return ext


def psi_max(cone: DoubleCone, s: float, n_grid: int = None, n_dirs: int = None) -> PsiExtremum:
    return _psi_extreme(cone, s, -1.0, n_grid, n_dirs)


# ---------------------------------------------------------------------------
# isotropic constants


def ell_constants(d: int, s: float, quad_resolution: int = None) -> EllConstants:
    """ell1, ell2 with M(xi) = |xi|^2s (ell1 I + ell2 xi^ xi^T) for the full-cone kernel m = 1, r = inf."""
    if d not in (1, 2, 3):
        raise InvalidArgumentError(f"dimension must be 1, 2 or 3, got {d}")
    spec = FractionalCone(s, DoubleCone.full(d))
    e1 = np.eye(d)[0]
    M = compute_symbol(spec, e1, quad_resolution).entries
    res = {"directions": quad_resolution or DEFAULT_DIRECTIONS[d]}
    if d == 1:
        return EllConstants(0.0, float(M[0, 0]), s, d, res,
                            "d = 1: the projector is the scalar 1, so ell1 = 0 and ell2 = c(s)")
    return EllConstants(float(M[1, 1]), float(M[0, 0] - M[1, 1]), s, d, res)


def inverse_multiplier(ell: EllConstants, xi) -> np.ndarray:
    """|xi|^-2s [(1/ell1) I - ell2/(ell1 (ell1 + ell2)) xi^ xi^T]."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    n = float(np.linalg.norm(xi))
    if n == 0.0:
        raise SingularFrequencyError("the multiplier is singular at xi = 0")
    if xi.size != ell.d:
        raise InvalidArgumentError(f"frequency must lie in R^{ell.d}")
    if ell.d == 1:
        return np.array([[n ** (-2 * ell.s) / (ell.ell1 + ell.ell2)]])
    e = xi / n
    P = np.outer(e, e)
    inv = np.eye(ell.d) / ell.ell1 - ell.ell2 / (ell.ell1 * (ell.ell1 + ell.ell2)) * P
    return n ** (-2 * ell.s) * inv
