"""Periodic spectral solves and Dirichlet volume-constrained solves.

Bounded problems are solved on interior DOFs with the collocation mass
matrix h^d I: A u = h^d f, where ``A`` is the stiffness matrix of
:mod:`nlelast.operators` (so that A u = h^d L_n u on the interior).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import linalg as spla

from .errors import (CoercivityViolationError, ConditionViolatedError, HypothesisViolatedError,
                     InequalityViolationError, InvalidArgumentError, NearDegenerateSymbolError,
                     NonconvergenceError)
from .geometry import DomainMask, DoubleCone
from .kernels import FractionalCone, KernelSpec, check_C2
from .operators import (GridField, _neighbor, _Pairs, _proj, apply_Ln, assemble_stiffness)
from .symbol import ell_constants, inverse_multiplier, symbol_field

STAGNATION_WINDOW = 50
STAGNATION_FACTOR = 1e-2
COND_LIMIT = 1e12
DEGENERACY_FLOOR = 1e-13


@dataclass
class SolveReport:
    solution: GridField
    residual_norm: float
    iterations: int
    energy: float
    seminorm: float
    constants: dict = field(default_factory=dict)
    wall_time: float = 0.0
    converged: bool = True
    method: str = ""
    history: list = field(default_factory=list)

    def to_dict(self, include_timing: bool = False) -> dict:
        """JSON-ready summary (the field itself is stored separately)."""
        out = {
            "method": self.method,
            "converged": self.converged,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "energy": self.energy,
            "seminorm": self.seminorm,
            "constants": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                          for k, v in self.constants.items()},
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


# ---------------------------------------------------------------------------
# periodic problems


def _is_isotropic_fractional(spec) -> bool:
    return (isinstance(spec, FractionalCone) and spec.m is None and math.isinf(spec.r)
            and spec.cone.is_full)


def solve_periodic(spec: KernelSpec, f: GridField, n_dirs: int = None, symbol=None) -> SolveReport:
    """Solve L u = f on a periodic grid by inverting the operator symbol M/2 per frequency.

    The mean of f is removed first (constants lie in the kernel of the
    operator) and u_hat(0) = 0.
    """
    t0 = time.perf_counter()
    g = f.grid
    if not g.periodic:
        raise InvalidArgumentError("solve_periodic needs a periodic grid")
    axes = tuple(range(1, g.d + 1))
    mean = f.values.mean(axis=axes)
    fv = f.values - mean.reshape((-1,) + (1,) * g.d)
    fh = np.fft.fftn(fv, axes=axes)
    fh.reshape(g.d, -1)[:, 0] = 0.0
    M = symbol_field(spec, g, n_dirs) if symbol is None else symbol
    S = 0.5 * np.moveaxis(M.reshape(g.d, g.d, -1), -1, 0)  # (N, d, d)
    F = fh.reshape(g.d, -1).T  # (N, d)
    lam, vec = np.linalg.eigh(S[1:])
    freqs = g.frequencies().reshape(g.d, -1).T
    bad = (lam[:, 0] <= 0) | (lam[:, -1] > COND_LIMIT * np.maximum(lam[:, 0], 1e-300))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0]) + 1
        cond = lam[i - 1, -1] / lam[i - 1, 0] if lam[i - 1, 0] > 0 else math.inf
        raise NearDegenerateSymbolError(
            f"symbol is near-degenerate at xi = {freqs[i].tolist()} (condition number {cond:.3e})",
            xi=freqs[i])
    U = np.zeros_like(F)
    coef = np.einsum("nba,nb->na", vec, F[1:]) / lam
    U[1:] = np.einsum("nab,nb->na", vec, coef)
    constants = {"removed_mean_norm": float(np.linalg.norm(mean)),
                 "max_condition": float(np.max(lam[:, -1] / lam[:, 0])) if len(lam) else 1.0}
    if _is_isotropic_fractional(spec) and g.d > 1:
        ell = ell_constants(g.d, spec.s)
        worst = 0.0
        for i in range(1, min(len(F), 64)):
            ref = 2 * inverse_multiplier(ell, freqs[i]) @ F[i]
            scale = max(np.linalg.norm(U[i]), 1e-300)
            worst = max(worst, float(np.linalg.norm(ref - U[i]) / scale) if np.any(F[i]) else 0.0)
        constants["closed_form_discrepancy"] = worst
    back = np.einsum("nab,nb->na", S, U)
    fnorm = float(np.linalg.norm(F))
    residual = float(np.linalg.norm(back - F) / fnorm) if fnorm > 0 else 0.0
    uvals = np.fft.ifftn(U.T.reshape(fh.shape), axes=axes).real
    u = GridField(g, uvals)
    Uh = U * g.cell_volume
    quad = np.einsum("na,nab,nb->n", np.conj(Uh), 2 * S, Uh).real
    seminorm = float(np.sum(quad)) / float(np.prod(g.lengths))
    return SolveReport(u, residual, 0, 0.5 * seminorm, seminorm, constants, time.perf_counter() - t0,
                       True, "spectral")


# ---------------------------------------------------------------------------
# Krylov solvers


def _stagnated(history):
    if len(history) <= STAGNATION_WINDOW:
        return False
    return history[-1] > STAGNATION_FACTOR * history[-1 - STAGNATION_WINDOW]


def conjugate_gradient(A, b, tol=1e-10, max_iter=None, x0=None, monitor=None):
    """Plain CG for symmetric A; raises on p^T A p <= 0 or stagnation.

    Returns ``(x, iterations, relative residual history)``.
    """
    n = b.size
    max_iter = max_iter or 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, [0.0]
    r = b - A @ x
    p = r.copy()
    rr = float(r @ r)
    # curvature below this fraction of the largest diagonal entry is roundoff
    floor = DEGENERACY_FLOOR * float(np.max(np.abs(A.diagonal()))) if hasattr(A, "diagonal") else 0.0
    history = [math.sqrt(rr) / bnorm]
    for it in range(1, max_iter + 1):
        if history[-1] <= tol:
            return x, it - 1, history
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= floor * float(p @ p):
            raise CoercivityViolationError(
                f"stiffness is not positive definite: p^T A p = {pAp:.3e} at iteration {it}")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        history.append(math.sqrt(rr) / bnorm)
        if monitor is not None:
            monitor(it, x)
        if _stagnated(history):
            raise NonconvergenceError(
                f"CG stagnated: residual reduced by less than {STAGNATION_FACTOR} over "
                f"{STAGNATION_WINDOW} iterations (at {history[-1]:.3e})")
    if history[-1] <= tol:
        return x, max_iter, history
    raise NonconvergenceError(f"CG did not reach tol {tol} in {max_iter} iterations (at {history[-1]:.3e})")


def transpose_free_qmr(A, b, tol=1e-10, max_iter=None, monitor=None, restarts=5):
    """TFQMR (SciPy) with a true-residual monitor and restarts."""
    n = b.size
    max_iter = max_iter or 10 * n
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, [0.0]
    history = [1.0]
    count = [0]

    def callback(xk):
        count[0] += 1
        history.append(float(np.linalg.norm(b - A @ xk)) / bnorm)
        if monitor is not None:
            monitor(count[0], xk)
        if _stagnated(history):
            raise NonconvergenceError(
                f"TFQMR stagnated: residual reduced by less than {STAGNATION_FACTOR} over "
                f"{STAGNATION_WINDOW} iterations (at {history[-1]:.3e})")

    x = np.zeros(n)
    for _ in range(restarts):
        budget = max_iter - count[0]
        if budget <= 0:
            break
        x, _info = spla.tfqmr(A, b, x0=x, rtol=0.1 * tol, atol=0.0, maxiter=budget, callback=callback)
        res = float(np.linalg.norm(b - A @ x)) / bnorm
        history.append(res)
        if res <= tol:
            return x, count[0], history
    raise NonconvergenceError(f"TFQMR did not reach tol {tol} in {max_iter} iterations (at {history[-1]:.3e})")


# ---------------------------------------------------------------------------
# Dirichlet problems


def _probe_points(mask: DomainMask, count=5):
    pts = mask.grid.points()[mask.inside.ravel()]
    idx = np.linspace(0, len(pts) - 1, min(count, len(pts))).round().astype(int)
    return pts[idx]


def verify_C2(spec: KernelSpec, mask: DomainMask, tol=1e-8):
    """Raise unless the (C2) matrices are positive semidefinite at interior probes."""
    if spec.is_symmetric:
        return {}
    h = max(mask.grid.spacing)
    R = spec.radius if math.isfinite(spec.radius) else 1.0
    eps_list = sorted({2 * h, 0.25 * R, 0.5 * R})
    probes = None if spec.translation_invariant else _probe_points(mask)
    vals = check_C2(spec, eps_list, probes)
    worst = min(vals.values())
    if worst < -tol:
        raise ConditionViolatedError(f"(C2) fails: smallest eigenvalue {worst:.3e} over eps {eps_list}")
    return vals


def _mass_rhs(A, f: GridField):
    return A.gather(f) * A.grid.cell_volume


def _krylov(matrix, b, symmetric, tol, max_iter, monitor=None):
    if symmetric:
        return conjugate_gradient(matrix, b, tol, max_iter, monitor=monitor)
    return transpose_free_qmr(matrix, b, tol, max_iter, monitor=monitor)


def solve_dirichlet(spec: KernelSpec, f: GridField, mask: DomainMask, tol: float = 1e-10,
                    max_iter: Optional[int] = None, acknowledge_hypotheses: bool = False,
                    stiffness=None) -> SolveReport:
    """Solve L u = f in the mask interior with u = 0 outside."""
    t0 = time.perf_counter()
    constants = {}
    if not acknowledge_hypotheses:
        c2 = verify_C2(spec, mask)
        if c2:
            constants["C2_min_eigenvalue"] = min(c2.values())
    A = stiffness or assemble_stiffness(spec, mask)
    b = _mass_rhs(A, f)
    x, its, history = _krylov(A.matrix, b, A.symmetric_flag, tol, max_iter)
    report = _finish(spec, A, x, b, f, its, history, constants, "cg" if A.symmetric_flag else "tfqmr")
    report.wall_time = time.perf_counter() - t0
    return report


def _seminorm_matrix(spec, A):
    if A.symmetric_flag and spec.is_symmetric:
        return 2.0 * A.matrix
    return 2.0 * assemble_stiffness(spec, A.mask, part="sym").matrix


def _finish(spec, A, x, b, f, its, history, constants, method, shift=0.0):
    hd = A.grid.cell_volume
    bnorm = float(np.linalg.norm(b))
    op = A.matrix
    res_vec = b - (op @ x + shift * hd * x)
    residual = float(np.linalg.norm(res_vec)) / bnorm if bnorm > 0 else float(np.linalg.norm(res_vec))
    energy = float(x @ (op @ x))
    KS = _seminorm_matrix(spec, A)
    seminorm = float(x @ (KS @ x))
    fnorm = f.l2_norm()
    constants = dict(constants)
    constants["f_l2"] = fnorm
    constants["u_l2"] = math.sqrt(float(x @ x) * hd)
    constants["pairing_f_u"] = float(b @ x)
    if fnorm > 0:
        constants["apriori_ratio"] = seminorm / fnorm
    return SolveReport(A.scatter(x), residual, its, energy, seminorm, constants, 0.0, True, method, history)


def lattice_A2(spec: KernelSpec, mask: DomainMask) -> float:
    """max over interior x of sum_y k_a^2 / k_s h^d (lattice version of A_2 with k~ = k_s)."""
    g = mask.grid
    acc = np.zeros(g.shape)
    for J, h, hn, region, kxy, kyx in _Pairs(spec, g):
        ks = 0.5 * (kxy + kyx)
        ka = 0.5 * (kxy - kyx)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(ka != 0, ka * ka / np.where(ks > 0, ks, 1.0), 0.0)
        acc[region] += np.broadcast_to(q, acc[region].shape)
    return float(np.max(acc[mask.inside])) * g.cell_volume


def solve_dirichlet_shifted(spec: KernelSpec, beta: float, f: GridField, mask: DomainMask,
                            tol: float = 1e-10, max_iter: Optional[int] = None,
                            sample_every: int = 10) -> SolveReport:
    """Solve (L + beta) u = f in the interior, u = 0 outside, checking the Garding bound on iterates.

    The bound F(u,u) >= 1/4 (|u|^2 + [u,u]_S) - gamma |u|^2 is checked with
    gamma = 2 A_2 + 1/4 (A_2 from the lattice, comparison kernel k_s).
    """
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    t0 = time.perf_counter()
    A = assemble_stiffness(spec, mask)
    hd = mask.grid.cell_volume
    KS = _seminorm_matrix(spec, A)
    a2 = lattice_A2(spec, mask)
    gamma = 2.0 * a2 + 0.25
    shifted = (A.matrix + beta * hd * _identity(A.n_dof)).tocsr()
    samples = {"count": 0, "measured_gamma": -math.inf}

    def check(u):
        l2 = float(u @ u) * hd
        if l2 == 0:
            return
        F = float(u @ (A.matrix @ u))
        S = float(u @ (KS @ u))
        need = 0.25 * (l2 + S) - F
        samples["measured_gamma"] = max(samples["measured_gamma"], need / l2)
        samples["count"] += 1
        if F < 0.25 * (l2 + S) - gamma * l2 - 1e-10 * max(abs(F), S, l2):
            raise InequalityViolationError(
                f"Garding bound fails on an iterate: F = {F:.6e} < 1/4 |u|_S^2 - {gamma:.4g} |u|^2")

    def monitor(it, xk):
        if it % sample_every == 0:
            check(xk)

    b = _mass_rhs(A, f)
    symmetric = A.symmetric_flag
    x, its, history = _krylov(shifted, b, symmetric, tol, max_iter, monitor)
    check(x)
    constants = {"beta": beta, "A2_lattice": a2, "garding_gamma": gamma,
                 "garding_measured_gamma": samples["measured_gamma"], "garding_samples": samples["count"]}
    report = _finish(spec, A, x, b, f, its, history, constants, "cg" if symmetric else "tfqmr", shift=beta)
    report.wall_time = time.perf_counter() - t0
    return report


def _identity(n):
    from scipy import sparse

    return sparse.identity(n, format="csr")


def v_seminorm(spec: KernelSpec, u: GridField, mask: DomainMask) -> float:
    """[u,u]_V: sum of k_s D(u)^2 h^2d over pairs with at least one point in the interior."""
    g = u.grid
    total = 0.0
    U = u.values
    inside = mask.inside
    for J, h, hn, region, kxy, kyx in _Pairs(spec, g):
        Uy, reg = _neighbor(U, J, g.periodic)
        Iy, _ = _neighbor(inside[None], J, g.periodic)
        keep = inside[reg] | Iy[0]
        Du = _proj(U[(slice(None),) + reg] - Uy, hn)
        ks = np.broadcast_to(0.5 * (kxy + kyx), Du.shape)
        total += float(np.sum((ks * Du * Du)[keep]))
    return total * g.cell_volume ** 2


def solve_nonzero_data(spec: KernelSpec, f: GridField, g: GridField, mask: DomainMask,
                       tol: float = 1e-10, max_iter: Optional[int] = None,
                       acknowledge_hypotheses: bool = False) -> SolveReport:
    """Solve L u = f in the interior with u = g outside via u = w + g."""
    t0 = time.perf_counter()
    if g.grid != mask.grid:
        raise InvalidArgumentError("boundary datum must live on the mask grid")
    Lg = apply_Ln(spec, GridField(g.grid, g.values))
    rhs = GridField(f.grid, f.values - Lg.values, mask)
    inner = solve_dirichlet(spec, rhs, mask, tol, max_iter, acknowledge_hypotheses)
    w = inner.solution
    u = GridField(g.grid, w.values + g.values)
    vu = v_seminorm(spec, u, mask)
    vg = v_seminorm(spec, g, mask)
    fl2 = f.l2_norm()
    constants = dict(inner.constants)
    constants.update({"v_seminorm_u": vu, "v_seminorm_g": vg, "f_l2": fl2,
                      "data_bound_ratio": vu / (fl2 ** 2 + vg) if fl2 ** 2 + vg > 0 else 0.0})
    report = SolveReport(u, inner.residual_norm, inner.iterations, inner.energy, inner.seminorm, constants,
                         time.perf_counter() - t0, True, inner.method, inner.history)
    return report
