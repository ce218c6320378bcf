"""Kernel catalog, symmetric/antisymmetric split and hypothesis checkers.

Every kernel is a frozen dataclass exposing a vectorized evaluator
``values(x, y)`` for point arrays of shape (N, d).  Translation-invariant
kernels also expose ``profile(h)`` with h = x - y.

The checkers integrate in polar coordinates around each probe point x,
with y = x - t w: a direction rule on the union of the support cones times
a radial rule graded toward the singularity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import HypothesisViolatedError, InvalidArgumentError
from .geometry import DoubleCone, HalfCone, direction_rule
from .quadrature import radial_rule

_SAMPLE_SEED = 20240611
DEFAULT_DIRECTIONS = {1: 2, 2: 256, 3: 96}


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != d:
        raise InvalidArgumentError(f"expected points in R^{d}, got shape {x.shape}")
    return x


def _norm(h):
    return np.sqrt(np.sum(h * h, axis=-1))


def _sample_directions(d, n=200):
    rng = np.random.default_rng(_SAMPLE_SEED)
    v = rng.standard_normal((n, d))
    return v / _norm(v)[:, None] * rng.uniform(0.05, 3.0, size=(n, 1))


class KernelSpec:
    """Common interface; concrete kernels are the dataclasses below."""

    d: int
    translation_invariant = False

    @property
    def radius(self) -> float:
        return math.inf

    @property
    def is_symmetric(self) -> bool:
        return False

    def values(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def direction_sets(self) -> list:
        """Cap unions covering the support of both k(x, x - t w) and k(x - t w, x)."""
        return [DoubleCone.full(self.d)]

    def radial_breaks(self) -> tuple:
        return ()

    def dominates_example1(self) -> tuple:
        """(bool, tag) for the Poincare-Korn sufficiency test."""
        return False, "no comparison kernel known"


class TranslationInvariant(KernelSpec):
    translation_invariant = True

    def profile(self, h) -> np.ndarray:
        raise NotImplementedError

    def values(self, x, y):
        return self.profile(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


def _check_bounded_even(fn, d, bounds, name):
    h = _sample_directions(d)
    a = np.asarray(fn(h), dtype=float)
    b = np.asarray(fn(-h), dtype=float)
    lo, hi = bounds
    if not (0 < lo <= hi):
        raise InvalidArgumentError(f"{name} bounds must satisfy 0 < lower <= upper, got {bounds}")
    if np.any(a < lo - 1e-12) or np.any(a > hi + 1e-12):
        raise InvalidArgumentError(f"{name} leaves its declared bounds {bounds} on sampled points")
    if np.max(np.abs(a - b)) > 1e-12 * max(1.0, np.max(np.abs(a))):
        raise InvalidArgumentError(f"{name} is not even on sampled points")


@dataclass(frozen=True, eq=False)
class FractionalCone(TranslationInvariant):
    """m(h) |h|^(-d-2s) restricted to a double cone and the ball B_r.

    ``m=None`` means m = 1.  ``m_homogeneous`` declares m(t h) = m(h) for
    t > 0, which enables the closed-form radial symbol integral.
    """

    s: float
    cone: DoubleCone
    r: float = math.inf
    m: Optional[Callable] = None
    m_bounds: tuple = (1.0, 1.0)
    m_homogeneous: bool = True

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InvalidArgumentError(f"order s must lie in (0, 1), got {self.s}")
        if not self.r > 0:
            raise InvalidArgumentError(f"truncation radius must be positive, got {self.r}")
        if not isinstance(self.cone, DoubleCone):
            raise InvalidArgumentError("FractionalCone needs a DoubleCone")
        if self.m is not None:
            _check_bounded_even(self.m, self.d, self.m_bounds, "m")
        object.__setattr__(self, "m_bounds", tuple(float(v) for v in self.m_bounds))

    @property
    def d(self):
        return self.cone.d

    @property
    def radius(self):
        return float(self.r)

    @property
    def is_symmetric(self):
        return True

    @property
    def alpha1(self):
        return self.m_bounds[0]

    @property
    def alpha2(self):
        return self.m_bounds[1]

    def m_values(self, h):
        if self.m is None:
            return np.ones(h.shape[:-1])
        return np.asarray(self.m(h), dtype=float)

    def profile(self, h):
        h = np.asarray(h, dtype=float)
        n = _norm(h)
        with np.errstate(divide="ignore", over="ignore"):
            val = self.m_values(h) * n ** (-self.d - 2 * self.s)
        ok = (n > 0) & (n < self.r) & _in_set(self.cone, h, n)
        return np.where(ok, val, 0.0)

    def direction_sets(self):
        return [self.cone]

    def radial_breaks(self):
        return (1.0,)

    def dominates_example1(self):
        return True, "m >= alpha1 > 0 and |h|^(-d-2s) >= 1 on the cone inside B_min(1,r)"


def _in_set(dset, h, n):
    out = np.zeros(n.shape, dtype=bool)
    nz = n > 0
    if np.any(nz):
        out[nz] = dset.contains_many((h[nz] / n[nz, None]).reshape(-1, dset.d))
    return out


@dataclass(frozen=True, eq=False)
class IntegrableCone(TranslationInvariant):
    """rho(h) 1_J(h) with rho integrable and supported in B_radius.

    With a ``DoubleCone`` this is symmetric (rho = 1 on the unit ball and the
    full cone is the standard integrable kernel); with a ``HalfCone`` the
    kernel is one-sided and has a nonzero antisymmetric part.
    """

    directions: object
    rho: Optional[Callable] = None
    radius_: float = 1.0

    def __post_init__(self):
        if not isinstance(self.directions, (DoubleCone, HalfCone)):
            raise InvalidArgumentError("directions must be a DoubleCone or HalfCone")
        if not (self.radius_ > 0 and math.isfinite(self.radius_)):
            raise InvalidArgumentError(f"support radius must be finite and positive, got {self.radius_}")
        if self.rho is not None:
            h = _sample_directions(self.d)
            a, b = np.asarray(self.rho(h)), np.asarray(self.rho(-h))
            if np.any(a < 0) or np.max(np.abs(a - b)) > 1e-12 * max(1.0, np.max(np.abs(a))):
                raise InvalidArgumentError("rho must be even and nonnegative")

    @property
    def d(self):
        return self.directions.d

    @property
    def radius(self):
        return float(self.radius_)

    @property
    def is_symmetric(self):
        return isinstance(self.directions, DoubleCone)

    def profile(self, h):
        h = np.asarray(h, dtype=float)
        n = _norm(h)
        rho = np.ones(n.shape) if self.rho is None else np.asarray(self.rho(h), dtype=float)
        ok = (n > 0) & (n < self.radius_) & _in_set(self.directions, h, n)
        return np.where(ok, rho, 0.0)

    def direction_sets(self):
        if isinstance(self.directions, HalfCone):
            return [self.directions, self.directions.reflected()]
        return [self.directions]

    def radial_breaks(self):
        return (1.0,)

    def dominates_example1(self):
        if self.rho is None:
            return True, "k_s >= (1/2) 1_B(radius) on the symmetrized cone"
        return True, "k_s is itself an even integrable comparison kernel"


@dataclass(frozen=True, eq=False)
class MixedOrder(TranslationInvariant):
    """|h|^(-d-2s) 1_cone(h) + |h|^(-d-2 alpha) 1_C(h), C = halfcone within B_1.

    Requires alpha < s/2 so that the antisymmetric part is dominated by
    the fractional symmetric part.
    """

    s: float
    alpha: float
    cone: DoubleCone
    halfcone: HalfCone
    r: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InvalidArgumentError(f"order s must lie in (0, 1), got {self.s}")
        if not 0.0 < self.alpha < self.s / 2:
            raise InvalidArgumentError(f"alpha must lie in (0, s/2) = (0, {self.s / 2}), got {self.alpha}")
        if not isinstance(self.halfcone, HalfCone) or not isinstance(self.cone, DoubleCone):
            raise InvalidArgumentError("MixedOrder needs a DoubleCone and a HalfCone")
        if not self.r > 0:
            raise InvalidArgumentError(f"truncation radius must be positive, got {self.r}")

    @property
    def d(self):
        return self.cone.d

    @property
    def radius(self):
        return float(max(self.r, 1.0))

    def profile(self, h):
        h = np.asarray(h, dtype=float)
        n = _norm(h)
        with np.errstate(divide="ignore", over="ignore"):
            frac = np.where((n > 0) & (n < self.r) & _in_set(self.cone, h, n),
                            n ** (-self.d - 2 * self.s), 0.0)
            low = np.where((n > 0) & (n < 1.0) & _in_set(self.halfcone, h, n),
                           n ** (-self.d - 2 * self.alpha), 0.0)
        return frac + low

    def direction_sets(self):
        return [self.cone, self.halfcone, self.halfcone.reflected()]

    def radial_breaks(self):
        return (1.0,)

    def dominates_example1(self):
        return True, "fractional part dominates 1_B1 on the cone"


@dataclass(frozen=True, eq=False)
class VariableOrder(KernelSpec):
    """b(x) |x - y|^(-d - alpha(x)) with 0 < alpha1 <= alpha(x) <= alpha2 < 2.

    ``b`` and ``order`` map point arrays (N, d) to arrays (N,).  The
    modulus-of-continuity condition on alpha is taken as declared.
    """

    dim: int
    b: Callable
    order: Callable
    b_bounds: tuple
    order_bounds: tuple
    r: float = math.inf

    def __post_init__(self):
        lo, hi = self.order_bounds
        if not 0.0 < lo <= hi < 2.0:
            raise InvalidArgumentError(f"order bounds must satisfy 0 < a1 <= a2 < 2, got {self.order_bounds}")
        blo, bhi = self.b_bounds
        if not 0.0 < blo <= bhi:
            raise InvalidArgumentError(f"b bounds must satisfy 0 < b1 <= b2, got {self.b_bounds}")
        if self.dim not in (1, 2, 3):
            raise InvalidArgumentError(f"dimension must be 1, 2 or 3, got {self.dim}")

    @property
    def d(self):
        return self.dim

    @property
    def radius(self):
        return float(self.r)

    def b_values(self, x):
        return np.broadcast_to(np.asarray(self.b(x), dtype=float), x.shape[:-1])

    def order_values(self, x):
        return np.broadcast_to(np.asarray(self.order(x), dtype=float), x.shape[:-1])

    def values(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        n = _norm(x - y)
        a = self.order_values(x)
        with np.errstate(divide="ignore", over="ignore"):
            val = self.b_values(x) * n ** (-self.d - a)
        return np.where((n > 0) & (n < self.r), val, 0.0)

    def radial_breaks(self):
        return (1.0,)

    def dominates_example1(self):
        return True, "k_s >= b1 on B_1 since |x-y|^(-d-alpha) >= 1 there"


@dataclass(frozen=True, eq=False)
class Custom(KernelSpec):
    """User kernel: ``evaluator(x, y)`` on point arrays, support within B_radius."""

    dim: int
    evaluator: Callable
    radius_: float = math.inf
    symmetric: bool = False
    invariant: bool = False

    @property
    def d(self):
        return self.dim

    @property
    def radius(self):
        return float(self.radius_)

    @property
    def is_symmetric(self):
        return self.symmetric

    @property
    def translation_invariant(self):
        return self.invariant

    def profile(self, h):
        h = np.asarray(h, dtype=float)
        return self.values(np.zeros_like(h), -h)

    def values(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        n = _norm(x - y)
        val = np.asarray(self.evaluator(x, y), dtype=float)
        val = np.broadcast_to(val, n.shape)
        if np.any(val < 0):
            raise InvalidArgumentError("kernel values must be nonnegative")
        return np.where((n > 0) & (n < self.radius_), val, 0.0)

    def radial_breaks(self):
        return (1.0,)


# ---------------------------------------------------------------------------
# catalog


def example1(d: int, radius: float = 1.0) -> IntegrableCone:
    """rho = 1 on B_radius with the full cone (symmetric, integrable)."""
    return IntegrableCone(DoubleCone.full(d), None, radius)


def example2(axis, half_angle: float, radius: float = 1.0, rho=None) -> IntegrableCone:
    """One-sided integrable kernel supported on a half cone."""
    return IntegrableCone(HalfCone.single(axis, half_angle), rho, radius)


CATALOG = ("example1", "example2", "fractional_cone", "mixed_order", "variable_order")


def make_kernel(name: str, d: int, **params) -> KernelSpec:
    """Build a catalog kernel by name (used by the CLI config)."""
    full = DoubleCone.full(d)
    cone = params.get("cone", full)
    if name == "example1":
        return example1(d, params.get("radius", 1.0))
    if name == "example2":
        hc = params.get("halfcone") or HalfCone.single((1.0,) + (0.0,) * (d - 1), params.get("half_angle", 0.5))
        return IntegrableCone(hc, params.get("rho"), params.get("radius", 1.0))
    if name == "fractional_cone":
        return FractionalCone(params["s"], cone, params.get("r", math.inf), params.get("m"),
                              params.get("m_bounds", (1.0, 1.0)), params.get("m_homogeneous", True))
    if name == "mixed_order":
        hc = params.get("halfcone") or HalfCone.single((1.0,) + (0.0,) * (d - 1), params.get("half_angle", 0.5))
        return MixedOrder(params["s"], params["alpha"], cone, hc, params.get("r", math.inf))
    if name == "variable_order":
        return VariableOrder(d, params["b"], params["order"], params["b_bounds"], params["order_bounds"],
                             params.get("r", math.inf))
    raise InvalidArgumentError(f"unknown kernel {name!r}; choose one of {', '.join(CATALOG)}")


# ---------------------------------------------------------------------------
# pointwise evaluation


def _pair(spec, x, y):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != spec.d or y.size != spec.d:
        raise InvalidArgumentError(f"points must lie in R^{spec.d}")
    if np.array_equal(x, y):
        raise InvalidArgumentError("kernel is not evaluated on the diagonal x = y")
    return x[None, :], y[None, :]


def eval_k(spec: KernelSpec, x, y) -> float:
    x, y = _pair(spec, x, y)
    return float(spec.values(x, y)[0])


def eval_ks(spec: KernelSpec, x, y) -> float:
    x, y = _pair(spec, x, y)
    return float((spec.values(x, y)[0] + spec.values(y, x)[0]) / 2)


def eval_ka(spec: KernelSpec, x, y) -> float:
    return float(split_values(spec, *_pair(spec, x, y))[1][0])


def split_values(spec: KernelSpec, x, y):
    """Vectorized (k_s, k_a) at point pairs."""
    a = spec.values(x, y)
    b = spec.values(y, x)
    # equal values (including both overflowing to inf) have no antisymmetric part
    with np.errstate(invalid="ignore"):
        return (a + b) / 2, np.where(a == b, 0.0, (a - b) / 2)


# ---------------------------------------------------------------------------
# polar quadrature around probes


@dataclass
class _Polar:
    dirs: np.ndarray
    dir_weights: np.ndarray
    rule: object

    @property
    def resolution(self):
        return {"directions": int(len(self.dir_weights)), "radial_nodes": int(len(self.rule.nodes)),
                "shells": self.rule.n_shells}


def _polar(spec, n_dirs, eps=0.0, hi=None):
    n = n_dirs or DEFAULT_DIRECTIONS[spec.d]
    dirs, wd = direction_rule(spec.direction_sets(), n)
    hi = spec.radius if hi is None else hi
    rule = radial_rule(eps, hi, breaks=spec.radial_breaks(), p=12)
    return _Polar(dirs, wd, rule)


def _integrate(spec, polar, x, integrand, tensor=False, what="integral"):
    """int integrand(x, y, t) dy over y = x - t w, optionally times w w^T."""
    rule = polar.rule
    t = rule.nodes
    x = np.asarray(x, dtype=float)
    Y = x[None, None, :] - t[None, :, None] * polar.dirs[:, None, :]
    X = np.broadcast_to(x, Y.shape)
    vals = integrand(X.reshape(-1, spec.d), Y.reshape(-1, spec.d), np.broadcast_to(t, Y.shape[:2]).ravel())
    vals = vals.reshape(Y.shape[:2])
    weighted = vals * polar.dir_weights[:, None] * (rule.weights * t ** (spec.d - 1))[None, :]
    per_dir_shell = rule.shell_sums(weighted)  # (ndir, nshell)
    magnitude = np.abs(per_dir_shell).sum(axis=0)
    if tensor:
        per_shell = np.einsum("ik,ia,ib->kab", per_dir_shell, polar.dirs, polar.dirs)
    else:
        per_shell = per_dir_shell.sum(axis=0)
    return rule.complete(per_shell, magnitude, probe=tuple(x.tolist()), what=what)


def _probes(spec, probe_points):
    if probe_points is None:
        return np.zeros((1, spec.d))
    return _as_points(probe_points, spec.d)


def check_second_moment(spec: KernelSpec, probe_points=None, quad_resolution: int = None) -> float:
    """max over probes of int min(1, |x-y|^2) k_s(x, y) dy."""
    polar = _polar(spec, quad_resolution)

    def f(X, Y, t):
        ks, _ = split_values(spec, X, Y)
        return np.minimum(1.0, t * t) * ks

    return max(float(_integrate(spec, polar, x, f, what="second moment")) for x in _probes(spec, probe_points))


def check_C1(spec: KernelSpec, eps_list: Sequence[float], probe_points=None, quad_resolution: int = None) -> dict:
    """eps -> sup over probes of int_{|x-y|>eps} |k_a(x, y)| dy."""
    out = {}
    for eps in eps_list:
        if not eps > 0:
            raise InvalidArgumentError(f"eps must be positive, got {eps}")
        if eps >= spec.radius:
            out[eps] = 0.0
            continue
        polar = _polar(spec, quad_resolution, eps=eps)

        def f(X, Y, t):
            _, ka = split_values(spec, X, Y)
            return np.abs(ka)

        out[eps] = max(float(_integrate(spec, polar, x, f, what="C1 integral"))
                       for x in _probes(spec, probe_points))
    return out


def check_C2(spec: KernelSpec, eps_list: Sequence[float], probe_points=None, quad_resolution: int = None) -> dict:
    """eps -> min over probes of lambda_min(int_{|x-y|>eps} k_a(x, y) h^ h^T dy)."""
    out = {}
    for eps in eps_list:
        if not eps > 0:
            raise InvalidArgumentError(f"eps must be positive, got {eps}")
        if eps >= spec.radius:
            out[eps] = 0.0
            continue
        polar = _polar(spec, quad_resolution, eps=eps)

        def f(X, Y, t):
            _, ka = split_values(spec, X, Y)
            return ka

        vals = []
        for x in _probes(spec, probe_points):
            mat = _integrate(spec, polar, x, f, tensor=True, what="C2 integral")
            vals.append(float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0]))
        out[eps] = min(vals)
    return out


def check_k2(spec: KernelSpec, tilde: Optional[KernelSpec] = None, probe_points=None,
             quad_resolution: int = None) -> float:
    """sup over probes of int k_a^2 / tilde dy (A_2); ``tilde=None`` uses k_s."""
    if tilde is not None and tilde.d != spec.d:
        raise InvalidArgumentError("tilde kernel dimension mismatch")
    polar = _polar(spec, quad_resolution)

    def f(X, Y, t):
        ks, ka = split_values(spec, X, Y)
        kt = ks if tilde is None else 0.5 * (tilde.values(X, Y) + tilde.values(Y, X))
        bad = (ka != 0) & (kt == 0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise HypothesisViolatedError(
                f"k_a is nonzero where the comparison kernel vanishes (x={X[i].tolist()}, y={Y[i].tolist()})")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ka != 0, ka * ka / np.where(kt == 0, 1.0, kt), 0.0)

    return max(float(_integrate(spec, polar, x, f, what="k2 integral")) for x in _probes(spec, probe_points))


@dataclass
class HypothesisReport:
    sm_value: float
    A2_estimate: float
    C1_estimates: dict
    C2_min_eigenvalue: dict
    pk_applicable: bool
    pk_tag: str
    notes: str = ""
    resolution: dict = field(default_factory=dict)

    @property
    def passes_C2(self) -> bool:
        return all(v >= -1e-8 for v in self.C2_min_eigenvalue.values())

    def to_dict(self):
        return {
            "sm_value": self.sm_value,
            "A2_estimate": self.A2_estimate,
            "C1_estimates": {repr(k): v for k, v in self.C1_estimates.items()},
            "C2_min_eigenvalue": {repr(k): v for k, v in self.C2_min_eigenvalue.items()},
            "pk_applicable": self.pk_applicable,
            "pk_tag": self.pk_tag,
            "notes": self.notes,
            "resolution": self.resolution,
        }


def check_hypotheses(spec: KernelSpec, probe_points=None, eps_list=(0.5, 0.25, 0.125),
                     tilde: Optional[KernelSpec] = None, quad_resolution: int = None) -> HypothesisReport:
    """Run every checker and collect the results."""
    sm = check_second_moment(spec, probe_points, quad_resolution)
    a2 = check_k2(spec, tilde, probe_points, quad_resolution)
    c1 = check_C1(spec, eps_list, probe_points, quad_resolution)
    c2 = check_C2(spec, eps_list, probe_points, quad_resolution)
    ok, tag = spec.dominates_example1()
    notes = []
    if tilde is None:
        notes.append("comparison kernel is k_s, so (k1) holds with A1 = 2 by definition of the energy norm")
    polar = _polar(spec, quad_resolution)
    return HypothesisReport(sm, a2, c1, c2, ok, tag, "; ".join(notes),
                            {"probes": int(len(_probes(spec, probe_points))), **polar.resolution})
