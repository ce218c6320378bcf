"""Lattice discretization of the nonlocal strain, operator and bilinear form.

All sums run over ordered pairs of grid points (x, y) with y = x - h for
lattice offsets h, the diagonal excluded.  On periodic grids y wraps
around; on bounded grids only pairs with both points on the grid are
used, which for a mask whose exterior collar covers the interaction
radius is the same as extending the field by zero.

Fields are stored component-major: ``values`` has shape (d, *n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import InvalidArgumentError, MemoryGuardError
from .geometry import DomainMask, Grid, reach
from .kernels import KernelSpec

NNZ_BUDGET = 40_000_000


@dataclass(frozen=True, eq=False)
class GridField:
    grid: Grid
    values: np.ndarray
    mask: Optional[DomainMask] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.d, *self.grid.shape):
            raise InvalidArgumentError(f"field shape {vals.shape} does not match grid {(self.grid.d, *self.grid.shape)}")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("field values must be finite")
        if self.mask is not None:
            if self.mask.grid is not self.grid and self.mask.grid != self.grid:
                raise InvalidArgumentError("mask and field live on different grids")
            vals[:, ~self.mask.inside] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid, mask=None):
        return cls(grid, np.zeros((grid.d, *grid.shape)), mask)

    @classmethod
    def from_function(cls, grid, fn, mask=None):
        """``fn`` maps coordinates of shape (d, *n) to values of shape (d, *n)."""
        return cls(grid, np.broadcast_to(fn(grid.coordinates()), (grid.d, *grid.shape)), mask)

    @property
    def d(self):
        return self.grid.d

    def with_values(self, values, mask="same"):
        return GridField(self.grid, values, self.mask if mask == "same" else mask)

    def l2_norm(self) -> float:
        return math.sqrt(float(np.sum(self.values ** 2)) * self.grid.cell_volume)

    def inner(self, other: "GridField") -> float:
        return float(np.sum(self.values * other.values)) * self.grid.cell_volume

    def __add__(self, other):
        return GridField(self.grid, self.values + other.values, None)

    def __sub__(self, other):
        return GridField(self.grid, self.values - other.values, None)


def _same_grid(a: GridField, b: GridField):
    if a.grid != b.grid:
        raise InvalidArgumentError("fields must share one grid")


# ---------------------------------------------------------------------------
# lattice offsets


def effective_radius(spec: KernelSpec, grid: Grid, cap: Optional[float] = None) -> float:
    """Interaction radius actually summed on ``grid``.

    Finite kernel radii are used as is (optionally reduced by ``cap``).  For
    infinite radii periodic grids default to half the shortest box side and
    bounded grids to the whole grid.
    """
    r = spec.radius
    if cap is not None:
        r = min(r, cap)
    if math.isinf(r):
        if grid.periodic:
            return float(np.min(grid.lengths) / 2)
        return float(np.sum(grid.lengths ** 2) ** 0.5 + 1.0)
    return float(r)


def lattice_offsets(grid: Grid, radius: float, eps: float = 0.0):
    """Integer offsets J and vectors h = J * spacing with eps < |h| < radius."""
    m = reach(grid, radius)
    if not grid.periodic:
        m = np.minimum(m, np.asarray(grid.n) - 1)
    axes = [np.arange(-mi, mi + 1) for mi in m]
    J = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.d)
    H = J * np.asarray(grid.spacing)
    n = np.sqrt(np.sum(H * H, axis=1))
    keep = (n > eps) & (n < radius) & (n > 0)
    return J[keep], H[keep]


def _shift(arr, J, periodic):
    """Return a view-like array with arr[i - J] at index i (periodic) and the valid region."""
    lead = arr.ndim - len(J)
    if periodic:
        return np.roll(arr, shift=tuple(int(j) for j in J), axis=tuple(range(lead, arr.ndim))), None
    dst, src = [], []
    for j, n in zip(J, arr.shape[lead:]):
        j = int(j)
        if j >= 0:
            dst.append(slice(j, n))
            src.append(slice(0, n - j))
        else:
            dst.append(slice(0, n + j))
            src.append(slice(-j, n))
    return tuple(dst), tuple(src)


class _Pairs:
    """Iterates over offsets yielding kernel values k(x, x-h), k(x-h, x) on the valid region."""

    def __init__(self, spec, grid, eps=0.0, cap=None):
        if spec.d != grid.d:
            raise InvalidArgumentError(f"kernel dimension {spec.d} does not match grid dimension {grid.d}")
        self.spec, self.grid = spec, grid
        self.radius = effective_radius(spec, grid, cap)
        self.J, self.H = lattice_offsets(grid, self.radius, eps)
        if spec.translation_invariant:
            self.kp = np.asarray(spec.values(self.H, np.zeros_like(self.H)), dtype=float)
            self.km = np.asarray(spec.values(np.zeros_like(self.H), self.H), dtype=float)
            live = (self.kp != 0) | (self.km != 0)
            self.J, self.H, self.kp, self.km = self.J[live], self.H[live], self.kp[live], self.km[live]
        self._X = None

    def coords(self):
        if self._X is None:
            self._X = np.moveaxis(self.grid.coordinates(), 0, -1)
        return self._X

    def __iter__(self):
        periodic = self.grid.periodic
        for i, (J, h) in enumerate(zip(self.J, self.H)):
            hn = h / math.sqrt(float(h @ h))
            if periodic:
                region = (slice(None),) * self.grid.d
            else:
                region, _ = _shift(np.empty(self.grid.shape), J, False)
            if self.spec.translation_invariant:
                kxy, kyx = self.kp[i], self.km[i]
            else:
                X = self.coords()[region]
                Y = X - h
                kxy = self.spec.values(X, Y)
                kyx = self.spec.values(Y, X)
            yield J, h, hn, region, kxy, kyx


def _neighbor(U, J, periodic):
    """(U at x - J on the valid region, valid region) for component-major U."""
    if periodic:
        shifted, _ = _shift(U, J, True)
        return shifted, (slice(None),) * (U.ndim - 1)
    dst, src = _shift(U[0], J, False)
    return U[(slice(None),) + src], dst


def _proj(V, hn):
    return np.tensordot(hn, V, axes=(0, 0))


# ---------------------------------------------------------------------------
# pointwise strain


def projected_difference(u: GridField, x, y) -> float:
    """D(u)(x, y) = (u(x) - u(y)) . (x - y)/|x - y| for grid indices x, y."""
    x = tuple(int(i) for i in np.atleast_1d(x))
    y = tuple(int(i) for i in np.atleast_1d(y))
    if x == y:
        raise InvalidArgumentError("projected difference is undefined on the diagonal x = y")
    g = u.grid
    h = (np.asarray(x) - np.asarray(y)) * np.asarray(g.spacing)
    du = u.values[(slice(None),) + x] - u.values[(slice(None),) + y]
    return float(du @ h) / math.sqrt(float(h @ h))


# ---------------------------------------------------------------------------
# operator and forms


def apply_Ln(spec: KernelSpec, u: GridField, eps: float = 0.0, cap: Optional[float] = None) -> GridField:
    """x -> sum_{|x-y|>eps} k(x,y) D(u)(x,y) (x-y)/|x-y| h^d.

    ``eps`` must be nonnegative; the diagonal is always excluded.  Exterior
    points of a masked field receive 0.
    """
    if eps < 0:
        raise InvalidArgumentError(f"eps must be nonnegative, got {eps}")
    g = u.grid
    U = u.values
    out = np.zeros_like(U)
    hd = g.cell_volume
    for J, h, hn, region, kxy, _ in _Pairs(spec, g, eps, cap):
        Uy, reg = _neighbor(U, J, g.periodic)
        Dx = _proj(U[(slice(None),) + reg] - Uy, hn)
        w = kxy * Dx * hd
        out[(slice(None),) + reg] += np.multiply.outer(hn, w)
    if u.mask is not None:
        out[:, ~u.mask.inside] = 0.0
    return GridField(g, out, None)


def bilinear_form(spec: KernelSpec, u: GridField, v: GridField, eps: float = 0.0, cap: Optional[float] = None) -> float:
    """F(u, v) = 1/2 sum k_s D(u) D(v) h^2d + sum k_a D(u) (v(x) . h^) h^2d."""
    _same_grid(u, v)
    g = u.grid
    U, V = u.values, v.values
    sym, anti = 0.0, 0.0
    for J, h, hn, region, kxy, kyx in _Pairs(spec, g, eps, cap):
        Uy, reg = _neighbor(U, J, g.periodic)
        Vy, _ = _neighbor(V, J, g.periodic)
        sl = (slice(None),) + reg
        Du = _proj(U[sl] - Uy, hn)
        Dv = _proj(V[sl] - Vy, hn)
        ks = 0.5 * (kxy + kyx)
        ka = 0.5 * (kxy - kyx)
        sym += float(np.sum(ks * Du * Dv))
        if np.any(ka != 0):
            anti += float(np.sum(ka * Du * _proj(V[sl], hn)))
    return (0.5 * sym + anti) * g.cell_volume ** 2


def energy_seminorm(spec: KernelSpec, u: GridField, eps: float = 0.0, cap: Optional[float] = None,
                    far_field: bool = False) -> float:
    """[u, u]_S = sum k_s D(u)^2 h^2d over ordered pairs.

    With ``far_field=True`` (periodic grid, even translation-invariant
    kernel with infinite radius) the interactions beyond the summed radius
    are added spectrally through the tail symbol M_inf - M_R.
    """
    g = u.grid
    U = u.values
    total = 0.0
    pairs = _Pairs(spec, g, eps, cap)
    for J, h, hn, region, kxy, kyx in pairs:
        Uy, reg = _neighbor(U, J, g.periodic)
        Du = _proj(U[(slice(None),) + reg] - Uy, hn)
        total += float(np.sum(0.5 * (kxy + kyx) * Du * Du))
    total *= g.cell_volume ** 2
    if far_field:
        total += tail_energy(spec, u, pairs.radius)
    return total


def tail_energy(spec, u: GridField, radius: float) -> float:
    """Spectral energy of the interactions of ``spec`` beyond ``radius`` (periodic grids)."""
    from .symbol import tail_symbol_field

    g = u.grid
    if not g.periodic:
        raise InvalidArgumentError("far-field correction needs a periodic grid")
    if not spec.radius > radius:
        return 0.0
    return spectral_energy(u, tail_symbol_field(spec, g, radius))


# ---------------------------------------------------------------------------
# stiffness


@dataclass(eq=False)
class StiffnessMatrix:
    """Sparse matrix on interior DOFs, point-major (point p, component a) -> p d + a.

    Convention: phi^T A u = F(u, phi), i.e. rows index the test field, so
    A u = h^d L_n u restricted to the interior.
    """

    matrix: sparse.csr_matrix
    mask: DomainMask
    points: np.ndarray
    symmetric_flag: bool

    @property
    def grid(self):
        return self.mask.grid

    @property
    def n_dof(self):
        return self.matrix.shape[0]

    def gather(self, u: GridField) -> np.ndarray:
        g = self.grid
        flat = u.values.reshape(g.d, -1)[:, self.points]
        return flat.T.reshape(-1).copy()

    def scatter(self, vec) -> GridField:
        g = self.grid
        vals = np.zeros((g.d, g.npoints))
        vals[:, self.points] = np.asarray(vec, dtype=float).reshape(-1, g.d).T
        return GridField(g, vals.reshape((g.d, *g.shape)), self.mask)

    def __matmul__(self, x):
        return self.matrix @ x


def assemble_stiffness(spec: KernelSpec, mask: DomainMask, part: str = "full", eps: float = 0.0,
                       cap: Optional[float] = None, nnz_budget: int = NNZ_BUDGET) -> StiffnessMatrix:
    """Assemble A with A[x,x] = sum_y k(x,y) P, A[x,y] = -k(x,y) P, P = h^ h^T, times h^2d.

    ``part`` selects the kernel used: "full" (k), "sym" (k_s) or "anti" (k_a).
    """
    if part not in ("full", "sym", "anti"):
        raise InvalidArgumentError(f"unknown part {part!r}")
    g = mask.grid
    pairs = _Pairs(spec, g, eps, cap)
    if not g.periodic:
        mask.require_collar(pairs.radius)
    d = g.d
    inside = mask.inside
    points = np.flatnonzero(inside.ravel())
    n_int = points.size
    dof_of = -np.ones(g.npoints, dtype=np.int64)
    dof_of[points] = np.arange(n_int)
    dof_of = dof_of.reshape(g.shape)
    est = n_int * (len(pairs.J) + 1) * d * d
    if est > nnz_budget:
        raise MemoryGuardError(f"stiffness stencil needs about {est} entries, budget is {nnz_budget}")
    weight = g.cell_volume ** 2
    diag = np.zeros((n_int, d, d))
    rows, cols, vals = [], [], []
    ia, ib = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    for J, h, hn, region, kxy, kyx in pairs:
        if part == "full":
            k = kxy
        elif part == "sym":
            k = 0.5 * (kxy + kyx)
        else:
            k = 0.5 * (kxy - kyx)
        if np.all(np.asarray(k) == 0):
            continue
        P = np.outer(hn, hn)
        karr = np.broadcast_to(k, inside[region].shape if not g.periodic else g.shape)
        # x runs over interior points in the valid region, y = x - J
        if g.periodic:
            xin = inside
            ydof, _ = _shift(dof_of, J, True)
            kin = karr[xin]
            xd = dof_of[xin]
            yd = ydof[xin]
        else:
            dst, src = _shift(dof_of, J, False)
            xin = inside[dst]
            kin = karr[xin]
            xd = dof_of[dst][xin]
            yd = dof_of[src][xin]
        np.add.at(diag, xd, (kin * weight)[:, None, None] * P)
        off = yd >= 0
        if np.any(off):
            b = (-kin[off] * weight)[:, None, None] * P
            rows.append((xd[off][:, None, None] * d + ia).ravel())
            cols.append((yd[off][:, None, None] * d + ib).ravel())
            vals.append(b.ravel())
    base = np.arange(n_int)[:, None, None] * d
    rows.append((base + ia).ravel())
    cols.append((base + ib).ravel())
    vals.append(diag.ravel())
    A = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_int * d, n_int * d)).tocsr()
    A.sum_duplicates()
    sym = bool(spec.is_symmetric or part == "sym")
    if sym:
        A = ((A + A.T) * 0.5).tocsr()
    return StiffnessMatrix(A, mask, points, sym)


def lattice_symbol(spec: KernelSpec, grid: Grid, eps: float = 0.0, cap: Optional[float] = None) -> np.ndarray:
    """Exact Fourier multiplier of the lattice energy on a periodic grid, shape (d, d, *n).

    For translation-invariant kernels the pair sum [u, u]_S equals
    sum over discrete frequencies of u_hat^* M_h u_hat / L^d with
    M_h(xi) = sum_h k_s(h) 2 (1 - cos(2 pi xi . h)) h^ h^T h^d.
    """
    if not grid.periodic or not spec.translation_invariant:
        raise InvalidArgumentError("lattice symbols need a periodic grid and a translation-invariant kernel")
    pairs = _Pairs(spec, grid, eps, cap)
    F = grid.frequencies().reshape(grid.d, -1).T
    out = np.zeros((F.shape[0], grid.d, grid.d))
    ks = 0.5 * (pairs.kp + pairs.km)
    hn = pairs.H / np.sqrt(np.sum(pairs.H ** 2, axis=1))[:, None]
    for i in range(0, len(ks), 256):
        sl = slice(i, i + 256)
        phase = 2 * math.pi * F @ pairs.H[sl].T  # (nf, nh)
        c = 4 * np.sin(0.5 * phase) ** 2 * ks[sl][None, :]
        out += np.einsum("fh,ha,hb->fab", c, hn[sl], hn[sl])
    out *= grid.cell_volume
    return np.moveaxis(out, 0, -1).reshape(grid.d, grid.d, *grid.shape)


def spectral_energy(u: GridField, multiplier: np.ndarray) -> float:
    """sum over frequencies of u_hat^* M u_hat / L^d with u_hat = h^d FFT(u)."""
    g = u.grid
    uh = np.fft.fftn(u.values, axes=tuple(range(1, g.d + 1))) * g.cell_volume
    quad = np.einsum("a...,ab...,b...->...", np.conj(uh), multiplier, uh).real
    return float(np.sum(quad)) / float(np.prod(g.lengths))
