"""Experiment configuration: an INI-style ``key = value`` file with sections.

Sections: ``[kernel]``, ``[grid]``, ``[domain]``, ``[rhs]``, ``[data]``,
``[run]``, ``[output]``.  Lines starting with ``#`` or ``;`` are comments.
Parsing collects every problem (with its line number) before failing.

Example::

    [kernel]
    name = fractional_cone
    s = 0.5
    r = 1.0

    [grid]
    d = 1
    n = 128

    [domain]
    shape = box
    lo = 0
    hi = 1
    collar = 1.0

    [rhs]
    kind = constant
    value = 1
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, UsageError
from .geometry import DomainMask, DoubleCone, Grid, HalfCone
from .kernels import CATALOG, KernelSpec, make_kernel
from .operators import GridField

RHS_KINDS = ("constant", "gaussian", "mode", "jump", "file")

# key -> (type, required)
SCHEMA = {
    "kernel": {"name": ("str", True), "s": ("float", False), "r": ("float", False), "radius": ("float", False),
               "alpha": ("float", False), "cone": ("str", False), "halfcone": ("str", False),
               "half_angle": ("float", False), "b": ("str", False), "order": ("str", False),
               "b_bounds": ("floats", False), "order_bounds": ("floats", False)},
    "grid": {"d": ("int", True), "n": ("ints", True), "periodic": ("bool", False), "length": ("floats", False)},
    "domain": {"shape": ("str", False), "lo": ("floats", False), "hi": ("floats", False),
               "center": ("floats", False), "radius": ("float", False), "collar": ("float", False)},
    "rhs": {"kind": ("str", False), "value": ("floats", False), "center": ("floats", False),
            "width": ("float", False), "amplitude": ("floats", False), "k": ("ints", False),
            "lo": ("floats", False), "hi": ("floats", False), "path": ("str", False)},
    "run": {"tol": ("float", False), "max_iter": ("int", False), "levels": ("floats", False),
            "p": ("float", False), "cutoff_center": ("floats", False), "cutoff_r_in": ("float", False),
            "cutoff_r_out": ("float", False), "beta": ("float", False), "n_xi": ("int", False),
            "n_random": ("int", False), "lp_evidence": ("float", False), "eps": ("floats", False),
            "acknowledge_hypotheses": ("bool", False)},
    "output": {"dir": ("str", False)},
}
SCHEMA["data"] = dict(SCHEMA["rhs"])


@dataclass
class ExperimentConfig:
    kernel: dict
    grid: dict
    domain: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    # -- builders -----------------------------------------------------------

    def build_kernel(self) -> KernelSpec:
        k = self.kernel
        d = self.grid["d"]
        params = {key: k[key] for key in ("s", "r", "radius", "alpha", "half_angle") if key in k}
        if "cone" in k:
            params["cone"] = parse_cone(k["cone"], d, DoubleCone)
        if "halfcone" in k:
            params["halfcone"] = parse_cone(k["halfcone"], d, HalfCone)
        if k["name"] == "variable_order":
            params["b"] = compile_expression(k.get("b", "1"), d)
            params["order"] = compile_expression(k["order"], d)
            params["b_bounds"] = tuple(k.get("b_bounds", (1.0, 1.0)))
            params["order_bounds"] = tuple(k["order_bounds"])
        return make_kernel(k["name"], d, **params)

    @property
    def periodic(self) -> bool:
        return bool(self.grid.get("periodic", False))

    def domain_box(self):
        d = self.grid["d"]
        dom = self.domain
        if dom.get("shape", "box") == "ball":
            c = np.broadcast_to(np.asarray(dom.get("center", [0.5] * d), float), (d,))
            rad = dom.get("radius", 0.5)
            return c - rad, c + rad
        lo = np.broadcast_to(np.asarray(dom.get("lo", [0.0]), float), (d,))
        hi = np.broadcast_to(np.asarray(dom.get("hi", [1.0]), float), (d,))
        return lo, hi

    def collar(self, spec: Optional[KernelSpec] = None) -> float:
        if "collar" in self.domain:
            return float(self.domain["collar"])
        if spec is not None and not math.isinf(spec.radius):
            return float(spec.radius)
        raise UsageError("[domain] collar is required for kernels of infinite range")

    def spacing(self, n=None):
        d = self.grid["d"]
        n = np.broadcast_to(np.asarray(self.grid["n"] if n is None else n, float), (d,))
        if self.periodic:
            length = np.broadcast_to(np.asarray(self.grid.get("length", [1.0]), float), (d,))
        else:
            lo, hi = self.domain_box()
            length = hi - lo
        return tuple(length / n)

    def build_grid(self, spec: Optional[KernelSpec] = None, spacing=None) -> Grid:
        d = self.grid["d"]
        if self.periodic:
            n = np.broadcast_to(np.asarray(self.grid["n"]), (d,))
            return Grid(d, tuple(int(v) for v in n), self.spacing(), periodic=True)
        lo, hi = self.domain_box()
        h = self.spacing() if spacing is None else spacing
        return Grid.covering(lo, hi, h, self.collar(spec))

    def build_mask(self, grid: Grid) -> DomainMask:
        dom = self.domain
        if dom.get("shape", "box") == "ball":
            c = np.broadcast_to(np.asarray(dom.get("center", [0.5] * grid.d), float), (grid.d,))
            return DomainMask.ball(grid, c, dom.get("radius", 0.5))
        lo, hi = self.domain_box()
        return DomainMask.box(grid, lo, hi)

    def rhs_function(self, section: str = "rhs") -> Callable:
        return rhs_function(getattr(self, section), self.grid["d"], self.base_dir)

    def build_field(self, grid: Grid, section: str = "rhs", mask: Optional[DomainMask] = None) -> GridField:
        src = getattr(self, section)
        if src.get("kind", "constant") == "file":
            from .nlfd import read_field

            u = read_field(self.base_dir / src["path"])
            if u.grid.shape != grid.shape or not np.allclose(u.grid.spacing, grid.spacing):
                raise UsageError(f"[{section}] file grid {u.grid.shape} does not match the configured grid {grid.shape}")
            return GridField(grid, u.values, mask)
        fn = self.rhs_function(section)
        return GridField(grid, fn(grid.coordinates()), mask)


# ---------------------------------------------------------------------------
# value parsing


def _parse_value(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    items = [v for v in re.split(r"[,\s]+", raw) if v]
    if not items:
        raise ValueError("expected at least one value")
    if kind == "ints":
        return [int(v) for v in items]
    return [float(v) for v in items]


def _range_errors(cfg: dict, lines: dict) -> list:
    errs = []

    def bad(section, key, msg):
        errs.append(f"line {lines.get((section, key), '?')}: [{section}] {key}: {msg}")

    k, g = cfg.get("kernel", {}), cfg.get("grid", {})
    name = k.get("name")
    if name is not None and name not in CATALOG:
        bad("kernel", "name", f"unknown kernel {name!r}; choose one of {', '.join(CATALOG)}")
    if "s" in k and not 0.0 < k["s"] < 1.0:
        bad("kernel", "s", f"s = {k['s']} must lie in (0, 1)")
    if name in ("fractional_cone", "mixed_order") and "s" not in k:
        bad("kernel", "s", f"required for kernel {name}")
    if name == "mixed_order":
        if "alpha" not in k:
            bad("kernel", "alpha", "required for kernel mixed_order")
        elif "s" in k and not 0.0 < k["alpha"] < k["s"] / 2:
            bad("kernel", "alpha", f"alpha = {k['alpha']} must lie in (0, s/2) = (0, {k['s'] / 2})")
    if name == "variable_order":
        for key in ("order", "order_bounds"):
            if key not in k:
                bad("kernel", key, "required for kernel variable_order")
        ob = k.get("order_bounds")
        if ob is not None and (len(ob) != 2 or not 0.0 < ob[0] <= ob[1] < 2.0):
            bad("kernel", "order_bounds", f"need two values 0 < a1 <= a2 < 2, got {ob}")
        bb = k.get("b_bounds")
        if bb is not None and (len(bb) != 2 or not 0.0 < bb[0] <= bb[1]):
            bad("kernel", "b_bounds", f"need two values 0 < b1 <= b2, got {bb}")
    for key in ("r", "radius"):
        if key in k and not k[key] > 0:
            bad("kernel", key, f"must be positive, got {k[key]}")
    if "half_angle" in k and not 0.0 < k["half_angle"] <= math.pi:
        bad("kernel", "half_angle", f"must lie in (0, pi], got {k['half_angle']}")
    if "d" in g and g["d"] not in (1, 2, 3):
        bad("grid", "d", f"dimension must be 1, 2 or 3, got {g['d']}")
    if "n" in g and any(v < 2 for v in g["n"]):
        bad("grid", "n", f"need at least 2 points per axis, got {g['n']}")
    dom = cfg.get("domain", {})
    if dom.get("shape", "box") not in ("box", "ball"):
        bad("domain", "shape", f"must be box or ball, got {dom['shape']!r}")
    if "collar" in dom and dom["collar"] < 0:
        bad("domain", "collar", f"must be nonnegative, got {dom['collar']}")
    for sec in ("rhs", "data"):
        src = cfg.get(sec, {})
        if src.get("kind", "constant") not in RHS_KINDS:
            bad(sec, "kind", f"must be one of {', '.join(RHS_KINDS)}, got {src['kind']!r}")
        if src.get("kind") == "file" and "path" not in src:
            bad(sec, "path", "required when kind = file")
        if "width" in src and not src["width"] > 0:
            bad(sec, "width", f"must be positive, got {src['width']}")
    run = cfg.get("run", {})
    if "tol" in run and not run["tol"] > 0:
        bad("run", "tol", f"must be positive, got {run['tol']}")
    if "max_iter" in run and run["max_iter"] < 1:
        bad("run", "max_iter", f"must be at least 1, got {run['max_iter']}")
    if "p" in run and run["p"] < 2:
        bad("run", "p", f"must be at least 2, got {run['p']}")
    if "levels" in run and any(not v > 0 for v in run["levels"]):
        bad("run", "levels", "grid spacings must be positive")
    if "beta" in run and not run["beta"] > 0:
        bad("run", "beta", f"must be positive, got {run['beta']}")
    return errs


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    """Parse and validate a configuration; raises UsageError listing every problem."""
    cfg: dict = {}
    lines: dict = {}
    errs = []
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", stripped)
        if m:
            section = m.group(1).lower()
            if section not in SCHEMA:
                errs.append(f"line {lineno}: unknown section [{section}]")
                section = None
            else:
                cfg.setdefault(section, {})
            continue
        if "=" not in stripped:
            errs.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        raw = re.split(r"\s+[#;]", raw, maxsplit=1)[0].strip()
        if section is None:
            errs.append(f"line {lineno}: key {key!r} outside a known section")
            continue
        if key not in SCHEMA[section]:
            errs.append(f"line {lineno}: [{section}] unknown key {key!r}")
            continue
        if (section, key) in lines:
            errs.append(f"line {lineno}: [{section}] {key} repeats line {lines[(section, key)]}")
            continue
        try:
            cfg[section][key] = _parse_value(SCHEMA[section][key][0], raw)
        except ValueError as exc:
            errs.append(f"line {lineno}: [{section}] {key}: {exc}")
            continue
        lines[(section, key)] = lineno
    for sec in ("kernel", "grid"):
        for key, (_, required) in SCHEMA[sec].items():
            if required and key not in cfg.get(sec, {}):
                errs.append(f"[{sec}] missing required key {key!r}")
    errs.extend(_range_errors(cfg, lines))
    base = Path(base_dir)
    for sec in ("rhs", "data"):
        src = cfg.get(sec, {})
        if src.get("kind") == "file" and "path" in src and not (base / src["path"]).is_file():
            errs.append(f"line {lines.get((sec, 'path'), '?')}: [{sec}] path: file {src['path']!r} does not exist")
    if not errs:
        k = cfg["kernel"]
        d = cfg["grid"]["d"]
        for key, cls in (("cone", DoubleCone), ("halfcone", HalfCone)):
            if key in k:
                try:
                    parse_cone(k[key], d, cls)
                except (InvalidArgumentError, ValueError) as exc:
                    errs.append(f"line {lines[('kernel', key)]}: [kernel] {key}: {exc}")
        if k["name"] == "variable_order":
            for key in ("b", "order"):
                if key in k:
                    try:
                        compile_expression(k[key], d)
                    except (InvalidArgumentError, ValueError) as exc:
                        errs.append(f"line {lines[('kernel', key)]}: [kernel] {key}: {exc}")
    if errs:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(errs))
    return ExperimentConfig(base_dir=base, **cfg)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"configuration file {str(path)!r} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


# ---------------------------------------------------------------------------
# cones, expressions, right-hand sides


def parse_cone(text: str, d: int, cls):
    """``full`` or ``;``-separated caps ``a1,...,ad:half_angle``."""
    text = text.strip()
    if text == "full":
        if cls is not DoubleCone:
            raise InvalidArgumentError("only double cones can be full")
        return DoubleCone.full(d)
    from .geometry import Cap

    caps = []
    for part in text.split(";"):
        if ":" not in part:
            raise InvalidArgumentError(f"cap {part.strip()!r} must read 'axis components:half_angle'")
        axis, angle = part.split(":", 1)
        vec = [float(v) for v in re.split(r"[,\s]+", axis.strip()) if v]
        if len(vec) != d:
            raise InvalidArgumentError(f"cap axis {vec} needs {d} components")
        caps.append(Cap.from_vector(vec, float(angle)))
    return cls(tuple(caps))


def compile_expression(text: str, d: int) -> Callable:
    """Vectorized callable (N, d) -> (N,) from an expression in x (or x0, x1, x2 / x, y, z)."""
    import sympy

    names = ["x0", "x1", "x2"][:d]
    symbols = sympy.symbols(names)
    local = {n: s for n, s in zip(names, symbols)}
    if d == 1:
        local["x"] = symbols[0]
    else:
        local.update({a: s for a, s in zip("xyz", symbols)})
    try:
        expr = sympy.sympify(text, locals=local)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise InvalidArgumentError(f"cannot parse expression {text!r}: {exc}") from None
    extra = expr.free_symbols - set(symbols)
    if extra:
        raise InvalidArgumentError(f"expression {text!r} uses unknown symbols {sorted(map(str, extra))}")
    fn = sympy.lambdify(symbols, expr, "numpy")

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(*np.moveaxis(x, -1, 0)), dtype=float), x.shape[:-1])

    return evaluate


def rhs_function(src: dict, d: int, base_dir=Path(".")) -> Callable:
    """Analytic field X (d, *n) -> values (d, *n) from the right-hand-side catalog."""
    kind = src.get("kind", "constant")

    def vec(key, default):
        return np.broadcast_to(np.asarray(src.get(key, default), float), (d,)).reshape((d,) + (1,) * d)

    if kind == "constant":
        v = vec("value", [1.0])
        return lambda X: np.broadcast_to(v, X.shape).copy()
    if kind == "gaussian":
        c, a = vec("center", [0.5]), vec("amplitude", [1.0])
        w = float(src.get("width", 0.1))
        return lambda X: a * np.exp(-np.sum((X - c) ** 2, axis=0) / w ** 2)[None]
    if kind == "mode":
        k = np.broadcast_to(np.asarray(src.get("k", [1]), float), (d,)).reshape((d,) + (1,) * d)
        a = vec("amplitude", [1.0])
        return lambda X: a * np.cos(2 * math.pi * np.sum(k * X, axis=0))[None]
    if kind == "jump":
        lo, hi, v = vec("lo", [0.25]), vec("hi", [0.5]), vec("value", [1.0])
        return lambda X: v * np.all((X > lo) & (X < hi), axis=0)[None]
    if kind == "file":
        raise UsageError("file right-hand sides are grid data, not functions; use build_field")
    raise UsageError(f"unknown right-hand side kind {kind!r}")
