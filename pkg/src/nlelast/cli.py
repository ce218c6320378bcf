"""Command-line batch runner.

Every subcommand reads an experiment configuration, writes its artifacts
(NLFD fields, JSON reports, CSV tables) to the output directory and
records them with SHA-256 hashes in ``manifest.json``.

Exit codes: 0 success, 1 usage error, 2 hypothesis violation,
3 nonconvergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import HypothesisError, InvalidArgumentError, NonconvergenceError, UsageError
from .kernels import FractionalCone, check_hypotheses
from .nlfd import write_field

SUBCOMMANDS = ("check-kernel", "symbol", "solve-periodic", "solve-dirichlet", "solve-shifted",
               "solve-nonzero", "korn", "pk", "regularity")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Artifacts:
    """Collects output files and writes the hash manifest."""

    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _record(self, path: Path):
        self.files.append(path)
        return path

    def json(self, name, payload):
        path = self.outdir / name
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return self._record(path)

    def csv(self, name, header, rows):
        path = self.outdir / name
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return self._record(path)

    def field(self, name, u):
        return self._record(write_field(self.outdir / name, u))

    def manifest(self):
        entries = [{"path": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
                   for p in sorted(self.files)]
        path = self.outdir / "manifest.json"
        path.write_text(json.dumps({"artifacts": entries}, indent=2) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# subcommands


def _bounded_setup(cfg: ExperimentConfig):
    if cfg.periodic:
        raise UsageError("this subcommand needs a bounded domain; set [grid] periodic = false")
    spec = cfg.build_kernel()
    grid = cfg.build_grid(spec)
    mask = cfg.build_mask(grid)
    return spec, grid, mask


def _solve_opts(cfg):
    run = cfg.run
    return {"tol": run.get("tol", 1e-10), "max_iter": run.get("max_iter")}


def cmd_check_kernel(cfg, out: Artifacts, seed):
    spec = cfg.build_kernel()
    eps = tuple(cfg.run.get("eps", (0.5, 0.25, 0.125)))
    rep = check_hypotheses(spec, eps_list=eps)
    out.json("hypotheses.json", {"kernel": cfg.kernel, **rep.to_dict(), "passes_C2": rep.passes_C2})


def cmd_symbol(cfg, out: Artifacts, seed):
    from .symbol import compute_symbol

    spec = cfg.build_kernel()
    d = spec.d
    rng = np.random.default_rng(seed)
    n = cfg.run.get("n_xi", 20)
    rows = []
    for _ in range(n):
        xi = rng.standard_normal(d)
        xi *= rng.uniform(0.5, 4.0) / np.linalg.norm(xi)
        M = compute_symbol(spec, xi)
        rows.append(list(xi) + list(M.entries.ravel()) + list(M.eigenvalues))
    header = ([f"xi{i}" for i in range(d)] + [f"M{a}{b}" for a in range(d) for b in range(d)]
              + [f"lambda{i}" for i in range(d)])
    out.csv("symbol.csv", header, rows)


def cmd_solve_periodic(cfg, out: Artifacts, seed):
    from .solver import solve_periodic

    if not cfg.periodic:
        raise UsageError("solve-periodic needs [grid] periodic = true")
    spec = cfg.build_kernel()
    grid = cfg.build_grid(spec)
    f = cfg.build_field(grid)
    rep = solve_periodic(spec, f)
    out.field("solution.nlfd", rep.solution)
    out.json("report.json", rep.to_dict())


def cmd_solve_dirichlet(cfg, out: Artifacts, seed):
    from .solver import solve_dirichlet

    spec, grid, mask = _bounded_setup(cfg)
    f = cfg.build_field(grid, mask=mask)
    rep = solve_dirichlet(spec, f, mask, acknowledge_hypotheses=cfg.run.get("acknowledge_hypotheses", False),
                          **_solve_opts(cfg))
    out.field("solution.nlfd", rep.solution)
    out.json("report.json", rep.to_dict())


def cmd_solve_shifted(cfg, out: Artifacts, seed):
    from .solver import solve_dirichlet_shifted

    spec, grid, mask = _bounded_setup(cfg)
    if "beta" not in cfg.run:
        raise UsageError("solve-shifted needs [run] beta")
    f = cfg.build_field(grid, mask=mask)
    rep = solve_dirichlet_shifted(spec, cfg.run["beta"], f, mask, **_solve_opts(cfg))
    out.field("solution.nlfd", rep.solution)
    out.json("report.json", rep.to_dict())


def cmd_solve_nonzero(cfg, out: Artifacts, seed):
    from .solver import solve_nonzero_data

    spec, grid, mask = _bounded_setup(cfg)
    if not cfg.data:
        raise UsageError("solve-nonzero needs a [data] section for the exterior values")
    f = cfg.build_field(grid, mask=mask)
    g = cfg.build_field(grid, section="data")
    rep = solve_nonzero_data(spec, f, g, mask, acknowledge_hypotheses=cfg.run.get("acknowledge_hypotheses", False),
                             **_solve_opts(cfg))
    out.field("solution.nlfd", rep.solution)
    out.json("report.json", rep.to_dict())


def cmd_korn(cfg, out: Artifacts, seed):
    from .diagnostics import korn_equivalence, korn_field_suite

    spec = cfg.build_kernel()
    if not isinstance(spec, FractionalCone):
        raise UsageError("korn needs kernel = fractional_cone")
    if not cfg.periodic:
        raise UsageError("korn needs [grid] periodic = true")
    grid = cfg.build_grid(spec)
    suite = korn_field_suite(grid, n_random=cfg.run.get("n_random", 50), seed=seed)
    rep = korn_equivalence(spec, grid, suite)
    out.json("korn.json", rep.to_dict())
    rows = [(name, rep.ratios["lower"].get(name, ""), rep.ratios["upper"].get(name, "")) for name in suite]
    out.csv("korn_fields.csv", ["field", "hs_over_energy", "hs_over_energy_plus_tail"], rows)


def cmd_pk(cfg, out: Artifacts, seed):
    from .diagnostics import pk_constant

    spec, grid, mask = _bounded_setup(cfg)
    info = pk_constant(spec, mask, return_info=True, seed=seed)
    out.json("pk.json", {"C_P": info.C_P, "lambda_min": info.lambda_min, "iterations": info.iterations,
                         "residual": info.residual, "n_interior": mask.n_interior, "spacing": grid.spacing})


def cmd_regularity(cfg, out: Artifacts, seed):
    from .diagnostics import interior_regularity_study, smoothstep_profile

    if cfg.periodic:
        raise UsageError("regularity needs a bounded domain")
    spec = cfg.build_kernel()
    lo, hi = cfg.domain_box()
    run = cfg.run
    center = np.broadcast_to(np.asarray(run.get("cutoff_center", 0.5 * (lo + hi)), float), (spec.d,))
    width = float(np.min(hi - lo))
    r_in = run.get("cutoff_r_in", 0.15 * width)
    r_out = run.get("cutoff_r_out", 0.3 * width)
    levels = run.get("levels", [1 / 64, 1 / 128, 1 / 256])
    f = cfg.rhs_function()

    def eta(X):
        return smoothstep_profile(X, center, r_in, r_out)

    rep = interior_regularity_study(spec, f, (lo, hi), eta, p=run.get("p", 2.0), levels=levels,
                                    collar=cfg.collar(spec), lp_evidence=run.get("lp_evidence"),
                                    cutoff_id=f"smoothstep(c={list(center)}, r_in={r_in}, r_out={r_out})",
                                    tol=run.get("tol", 1e-10))
    out.json("regularity.json", rep.to_dict())
    out.csv("regularity.csv", ["level", "h", "ratio"],
            [(i, lv["h"], lv["ratio"]) for i, lv in enumerate(rep.levels)])


COMMANDS = {
    "check-kernel": cmd_check_kernel,
    "symbol": cmd_symbol,
    "solve-periodic": cmd_solve_periodic,
    "solve-dirichlet": cmd_solve_dirichlet,
    "solve-shifted": cmd_solve_shifted,
    "solve-nonzero": cmd_solve_nonzero,
    "korn": cmd_korn,
    "pk": cmd_pk,
    "regularity": cmd_regularity,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlelast", description="Nonlocal elasticity experiments")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="experiment configuration file")
    parser.add_argument("--output", help="output directory (overrides [output] dir)")
    parser.add_argument("--threads", type=int, help="worker threads (default: $NLELAST_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=0, help="seed for random field suites")
    return parser


def run(cfg: ExperimentConfig, subcommand: str, outdir, seed: int = 0, threads: int = 1) -> Path:
    """Run one subcommand and return the manifest path; errors propagate."""
    if subcommand not in COMMANDS:
        raise UsageError(f"unknown subcommand {subcommand!r}")
    out = Artifacts(Path(outdir))
    COMMANDS[subcommand](cfg, out, seed)
    return out.manifest()


def _threads(arg):
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("NLELAST_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise UsageError(f"NLELAST_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise UsageError(f"thread count must be positive, got {n}")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise UsageError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        threads = _threads(args.threads)
        cfg = load_config(args.config)
        outdir = args.output or cfg.output.get("dir")
        if not outdir:
            raise UsageError("no output directory: pass --output or set [output] dir")
        manifest = run(cfg, args.subcommand, outdir, seed=args.seed, threads=threads)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except HypothesisError as exc:
        print(f"hypothesis violation ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except NonconvergenceError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return 3
    except InvalidArgumentError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    print(str(manifest))
    return 0


if __name__ == "__main__":
    sys.exit(main())
