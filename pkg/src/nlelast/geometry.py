"""Double cones, uniform grids and domain masks.

Direction sets are finite unions of spherical caps.  ``DoubleCone`` is
symmetric by construction (membership tests ``|w . axis|``); ``HalfCone``
tests the signed product and is used for the asymmetric supports of
non-symmetric kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError

_AXIS_TOL = 1e-12


@dataclass(frozen=True)
class Cap:
    axis: tuple
    half_angle: float

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        if a.ndim != 1 or a.size not in (1, 2, 3):
            raise InvalidArgumentError(f"cap axis must be a vector in R^1..R^3, got {self.axis!r}")
        if abs(np.linalg.norm(a) - 1.0) > _AXIS_TOL:
            raise InvalidArgumentError(f"cap axis {self.axis!r} is not a unit vector")
        if not (0.0 < self.half_angle <= math.pi):
            raise InvalidArgumentError(f"half_angle must lie in (0, pi], got {self.half_angle}")
        object.__setattr__(self, "axis", tuple(float(v) for v in a))

    @classmethod
    def from_vector(cls, v, half_angle):
        a = np.asarray(v, dtype=float)
        return cls(tuple(a / np.linalg.norm(a)), float(half_angle))


class _CapUnion:
    caps: tuple
    symmetric: bool

    @property
    def d(self) -> int:
        return len(self.caps[0].axis)

    def contains_many(self, dirs) -> np.ndarray:
        """Membership of unit directions, shape (N, d) -> bool (N,)."""
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        out = np.zeros(dirs.shape[0], dtype=bool)
        for cap in self.caps:
            dot = dirs @ np.asarray(cap.axis)
            if self.symmetric:
                dot = np.abs(dot)
            out |= dot >= math.cos(cap.half_angle) - 1e-15
        return out

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            raise InvalidArgumentError("direction of the zero vector is undefined")
        return bool(self.contains_many(v / nv)[0])

    @property
    def is_full(self) -> bool:
        lim = math.pi / 2 if self.symmetric else math.pi
        return any(c.half_angle >= lim for c in self.caps)

    def arcs(self):
        """Angular intervals (d = 2) covered by each cap."""
        if self.d != 2:
            raise InvalidArgumentError("arcs are only defined in two dimensions")
        out = []
        for cap in self.caps:
            phi = math.atan2(cap.axis[1], cap.axis[0])
            th = cap.half_angle
            if self.symmetric:
                if th >= math.pi / 2:
                    return [(0.0, 2 * math.pi)]
                out.append((phi - th, phi + th))
                out.append((phi + math.pi - th, phi + math.pi + th))
            else:
                if th >= math.pi:
                    return [(0.0, 2 * math.pi)]
                out.append((phi - th, phi + th))
        return out


@dataclass(frozen=True)
class DoubleCone(_CapUnion):
    """Symmetric double cone: nonzero h with |h/|h| . axis| >= cos(half_angle) for some cap."""

    caps: tuple
    symmetric: bool = field(default=True, init=False)

    def __post_init__(self):
        caps = tuple(self.caps)
        if not caps:
            raise InvalidArgumentError("a cone needs at least one cap")
        if len({len(c.axis) for c in caps}) != 1:
            raise InvalidArgumentError("all cap axes must share one dimension")
        object.__setattr__(self, "caps", caps)

    @classmethod
    def full(cls, d: int) -> "DoubleCone":
        axis = (1.0,) + (0.0,) * (d - 1)
        return cls((Cap(axis, math.pi),))

    @classmethod
    def single(cls, axis, half_angle) -> "DoubleCone":
        return cls((Cap.from_vector(axis, half_angle),))


@dataclass(frozen=True)
class HalfCone(_CapUnion):
    """One-sided direction set J with -J != J in general."""

    caps: tuple
    symmetric: bool = field(default=False, init=False)

    def __post_init__(self):
        caps = tuple(self.caps)
        if not caps:
            raise InvalidArgumentError("a half cone needs at least one cap")
        object.__setattr__(self, "caps", caps)

    @classmethod
    def single(cls, axis, half_angle) -> "HalfCone":
        return cls((Cap.from_vector(axis, half_angle),))

    def reflected(self) -> "HalfCone":
        return HalfCone(tuple(Cap(tuple(-a for a in c.axis), c.half_angle) for c in self.caps))

    def symmetrized(self) -> DoubleCone:
        return DoubleCone(self.caps)


# ---------------------------------------------------------------------------
# spherical quadrature


def _merge_intervals(intervals):
    two_pi = 2 * math.pi
    pieces = []
    for a, b in intervals:
        if b - a >= two_pi - 1e-15:
            return [(0.0, two_pi)]
        a0 = a % two_pi
        b0 = a0 + (b - a)
        if b0 > two_pi:
            pieces += [(a0, two_pi), (0.0, b0 - two_pi)]
        else:
            pieces.append((a0, b0))
    pieces.sort()
    merged = []
    for a, b in pieces:
        if merged and a <= merged[-1][1] + 1e-15:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _circle_rule(sets, n, breaks):
    two_pi = 2 * math.pi
    cuts = {0.0, two_pi}
    for s in sets:
        for a, b in s.arcs():
            cuts.update((a % two_pi, b % two_pi))
    cuts.update(float(t) % two_pi for t in breaks)
    cuts = sorted(cuts)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a < 1e-14:
            continue
        mid = 0.5 * (a + b)
        w_mid = np.array([[math.cos(mid), math.sin(mid)]])
        if not any(s.contains_many(w_mid)[0] for s in sets):
            continue
        m = max(8, int(math.ceil(n * (b - a) / two_pi)))
        x, w = np.polynomial.legendre.leggauss(m)
        t = 0.5 * (b - a) * x + mid
        nodes.append(t)
        weights.append(0.5 * (b - a) * w)
    if not nodes:
        return np.zeros((0, 2)), np.zeros(0)
    t = np.concatenate(nodes)
    return np.column_stack([np.cos(t), np.sin(t)]), np.concatenate(weights)


def _frame(axis):
    a = np.asarray(axis, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return e1, e2, a


def _sphere_band(axis, zlo, zhi, n):
    e1, e2, a = _frame(axis)
    nz = max(8, n // 2)
    x, w = np.polynomial.legendre.leggauss(nz)
    z = 0.5 * (zhi - zlo) * x + 0.5 * (zhi + zlo)
    wz = 0.5 * (zhi - zlo) * w
    nphi = max(16, n)
    phi = 2 * math.pi * np.arange(nphi) / nphi
    Z, P = np.meshgrid(z, phi, indexing="ij")
    rho = np.sqrt(np.clip(1 - Z ** 2, 0.0, None))
    pts = (rho * np.cos(P))[..., None] * e1 + (rho * np.sin(P))[..., None] * e2 + Z[..., None] * a
    wts = np.repeat(wz[:, None], nphi, axis=1) * (2 * math.pi / nphi)
    return pts.reshape(-1, 3), wts.ravel()


def _sphere_rule(sets, n):
    caps = [(s, c) for s in sets for c in s.caps]
    if len(caps) == 1:
        s, cap = caps[0]
        ct = math.cos(cap.half_angle)
        if s.is_full:
            return _sphere_band(cap.axis, -1.0, 1.0, n)
        p1, w1 = _sphere_band(cap.axis, ct, 1.0, n)
        if not s.symmetric:
            return p1, w1
        p2, w2 = _sphere_band(cap.axis, -1.0, -ct, n)
        return np.vstack([p1, p2]), np.concatenate([w1, w2])
    pts, wts = _sphere_band((0.0, 0.0, 1.0), -1.0, 1.0, 2 * n)
    keep = np.zeros(len(wts), dtype=bool)
    for s in sets:
        keep |= s.contains_many(pts)
    return pts[keep], wts[keep]


def direction_rule(sets: Sequence[_CapUnion], n: int = 512, breaks=()):
    """Quadrature nodes and weights on the union of direction sets.

    In two dimensions the circle is cut at every cap boundary (and at the
    optional ``breaks`` angles) and each piece gets a Gauss-Legendre rule,
    so indicator functions of the sets are integrated exactly.  In three
    dimensions a single cap gets an aligned product rule; unions fall back
    to a masked global product rule.
    """
    sets = [s for s in sets if s is not None]
    if not sets:
        raise InvalidArgumentError("need at least one direction set")
    d = sets[0].d
    if d == 1:
        cand = np.array([[1.0], [-1.0]])
        keep = np.zeros(2, dtype=bool)
        for s in sets:
            keep |= s.contains_many(cand)
        return cand[keep], np.ones(int(keep.sum()))
    if d == 2:
        return _circle_rule(sets, n, breaks)
    if d == 3:
        return _sphere_rule(sets, n)
    raise InvalidArgumentError(f"unsupported dimension {d}")


# ---------------------------------------------------------------------------
# cone operations


def cone_contains(cone: _CapUnion, v) -> bool:
    return cone.contains(v)


def cone_surface_measure(cone: _CapUnion, n: int = 512) -> float:
    """Hausdorff measure of the cone's trace on the unit sphere."""
    if cone.d == 2 and cone.is_full:
        return 2 * math.pi
    if cone.d == 2:
        return float(sum(b - a for a, b in _merge_intervals(cone.arcs())))
    _, w = direction_rule([cone], n)
    return float(w.sum())


def cone_tail_mass(cone: _CapUnion, s: float, r: float) -> float:
    """Integral of |h|^(-d-2s) over the cone outside the ball of radius r."""
    if not r > 0:
        raise InvalidArgumentError(f"radius must be positive, got {r}")
    if not 0.0 < s < 1.0:
        raise InvalidArgumentError(f"order s must lie in (0, 1), got {s}")
    if math.isinf(r):
        return 0.0
    return cone_surface_measure(cone) * r ** (-2 * s) / (2 * s)


# ---------------------------------------------------------------------------
# grids and masks


@dataclass(frozen=True)
class Grid:
    d: int
    n: tuple
    spacing: tuple
    periodic: bool = False
    origin: tuple = None

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise InvalidArgumentError(f"dimension must be 1, 2 or 3, got {self.d}")
        n = tuple(int(v) for v in np.broadcast_to(self.n, (self.d,)))
        h = tuple(float(v) for v in np.broadcast_to(self.spacing, (self.d,)))
        if any(v < 2 for v in n):
            raise InvalidArgumentError(f"need at least 2 points per axis, got {n}")
        if any(not v > 0 for v in h):
            raise InvalidArgumentError(f"spacing must be positive, got {h}")
        origin = (0.0,) * self.d if self.origin is None else tuple(float(v) for v in np.broadcast_to(self.origin, (self.d,)))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def covering(cls, lo, hi, spacing, collar=0.0):
        """Cell-centred bounded grid over the box [lo, hi] padded by ``collar``."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        d = lo.size
        h = np.broadcast_to(np.asarray(spacing, dtype=float), (d,))
        cells = np.rint((hi - lo) / h).astype(int)
        if np.any(np.abs(cells * h - (hi - lo)) > 1e-9 * np.maximum(1.0, hi - lo)):
            raise InvalidArgumentError("box extent must be an integer multiple of the spacing")
        c = np.ceil(collar / h - 1e-9).astype(int)
        origin = lo - c * h + 0.5 * h
        return cls(d, tuple(cells + 2 * c), tuple(h), False, tuple(origin))

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def npoints(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.n) * np.asarray(self.spacing)

    def axes(self):
        return [self.origin[i] + self.spacing[i] * np.arange(self.n[i]) for i in range(self.d)]

    def coordinates(self) -> np.ndarray:
        """Coordinates, shape (d, *n)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        return self.coordinates().reshape(self.d, -1).T

    def frequencies(self) -> np.ndarray:
        """Discrete frequencies k / (n h) in FFT order, shape (d, *n)."""
        f = [np.fft.fftfreq(self.n[i], d=self.spacing[i]) for i in range(self.d)]
        return np.stack(np.meshgrid(*f, indexing="ij"))

    def refined(self, factor: int = 2) -> "Grid":
        """Same physical box with spacing divided by ``factor`` (cell-centred)."""
        h = np.asarray(self.spacing) / factor
        lo = np.asarray(self.origin) - 0.5 * np.asarray(self.spacing)
        origin = lo + 0.5 * h if not self.periodic else np.asarray(self.origin)
        return Grid(self.d, tuple(np.asarray(self.n) * factor), tuple(h), self.periodic, tuple(origin))


def reach(grid: Grid, radius: float) -> np.ndarray:
    """Largest |index offset| per axis of lattice vectors with |J h| < radius."""
    h = np.asarray(grid.spacing)
    return np.maximum(np.ceil(radius / h - 1e-12).astype(int) - 1, 0)


@dataclass(frozen=True, eq=False)
class DomainMask:
    grid: Grid
    inside: np.ndarray

    def __post_init__(self):
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != self.grid.shape:
            raise InvalidArgumentError(f"mask shape {inside.shape} does not match grid {self.grid.shape}")
        if not inside.any():
            raise InvalidArgumentError("domain mask has no interior point")
        inside = inside.copy()
        inside.setflags(write=False)
        object.__setattr__(self, "inside", inside)

    @classmethod
    def box(cls, grid: Grid, lo, hi) -> "DomainMask":
        X = grid.coordinates()
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (grid.d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (grid.d,))
        inside = np.ones(grid.shape, dtype=bool)
        for i in range(grid.d):
            inside &= (X[i] > lo[i]) & (X[i] < hi[i])
        return cls(grid, inside)

    @classmethod
    def ball(cls, grid: Grid, center, radius) -> "DomainMask":
        X = grid.coordinates()
        c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
        dist2 = sum((X[i] - c[i]) ** 2 for i in range(grid.d))
        return cls(grid, dist2 < radius ** 2)

    @property
    def n_interior(self) -> int:
        return int(self.inside.sum())

    def collar_width(self) -> np.ndarray:
        """Number of exterior layers between the interior and each grid face."""
        idx = np.nonzero(self.inside)
        n = np.asarray(self.grid.n)
        lo = np.array([i.min() for i in idx])
        hi = np.array([n[a] - 1 - idx[a].max() for a in range(self.grid.d)])
        return np.minimum(lo, hi)

    def supports_radius(self, radius: float) -> bool:
        if self.grid.periodic:
            return True
        if math.isinf(radius):
            return False
        return bool(np.all(self.collar_width() >= reach(self.grid, radius)))

    def require_collar(self, radius: float):
        if not self.supports_radius(radius):
            raise InvalidArgumentError(
                f"exterior collar {self.collar_width().tolist()} (cells) is narrower than the "
                f"interaction radius {radius}")
