import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlelast.diagnostics import (critical_exponent, fractional_laplacian, gagliardo_seminorm, hs_norm, hs_seminorm,
                                 interior_regularity_study, korn_equivalence, korn_field_suite,
                                 localization_residual, localization_terms, lp_norm, pk_constant,
                                 rigid_motion_test, smoothstep_cutoff, smoothstep_profile)
from nlelast.errors import CoercivityViolationError, InvalidArgumentError, InvalidCutoffError
from nlelast.geometry import DomainMask, DoubleCone, Grid, cone_tail_mass
from nlelast.kernels import FractionalCone, example1
from nlelast.operators import GridField, apply_Ln
from nlelast.quadrature import cos_moment


def periodic(d, n, length=1.0):
    return Grid(d, (n,) * d, length / n, periodic=True)


def interval_mask(h, collar=1.0, lo=0.0, hi=1.0):
    grid = Grid.covering((lo,), (hi,), h, collar)
    return DomainMask.box(grid, (lo,), (hi,))


# ---------------------------------------------------------------------------
# norms


def test_hs_constant_is_zero():
    g = periodic(2, 16)
    u = GridField(g, np.full((2, 16, 16), 3.0))
    assert hs_seminorm(u, 0.5) == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("sigma", [0.25, 0.5, 1.5])
@pytest.mark.parametrize("length", [1.0, 2.0])
def test_hs_single_mode(sigma, length):
    n = 32
    g = periodic(1, n, length)
    k = 3
    xi = k / length
    u = GridField.from_function(g, lambda X: np.cos(2 * np.pi * xi * X))
    # the two frequencies +-xi each carry (L/2)^2
    assert hs_seminorm(u, sigma) == pytest.approx(xi ** (2 * sigma) * length / 2, rel=1e-12)


def test_hs_norm_and_range():
    g = periodic(1, 16)
    u = GridField.from_function(g, lambda X: np.sin(2 * np.pi * X))
    assert hs_norm(u, 0.5) ** 2 == pytest.approx(u.l2_norm() ** 2 + hs_seminorm(u, 0.5))
    for bad in (0.0, 2.0, -1.0):
        with pytest.raises(InvalidArgumentError):
            hs_seminorm(u, bad)


def test_fractional_laplacian_of_mode():
    g = periodic(1, 32)
    u = GridField.from_function(g, lambda X: np.sin(2 * np.pi * 2 * X))
    v = fractional_laplacian(u, 0.75)
    assert np.allclose(v.values, (4 * np.pi) ** 1.5 * u.values, atol=1e-10)


def test_lp_norm_values():
    g = periodic(2, 8)
    u = GridField(g, np.stack([np.full((8, 8), 3.0), np.full((8, 8), 4.0)]))
    assert lp_norm(u, 2) == pytest.approx(5.0)
    assert lp_norm(u, 4) == pytest.approx(5.0)
    assert lp_norm(u, math.inf) == pytest.approx(5.0)


@pytest.mark.parametrize("sigma", [0.25, 0.5])
def test_gagliardo_matches_fourier_route(sigma):
    # |e^(2 pi i xi h) - 1|^2 integrated against |h|^(-1-2 sigma) gives 4 C(sigma) (2 pi |xi|)^(2 sigma)
    n = 256
    g = periodic(1, n)
    u = GridField.from_function(g, lambda X: np.exp(-((X - 0.5) / 0.1) ** 2))
    fourier = 4 * cos_moment(sigma) * (2 * np.pi) ** (2 * sigma) * hs_seminorm(u, sigma)
    assert gagliardo_seminorm(u, sigma) == pytest.approx(fourier, rel=0.05)


def test_gagliardo_needs_periodic_grid():
    g = Grid(1, (8,), 1 / 8)
    with pytest.raises(InvalidArgumentError):
        gagliardo_seminorm(GridField.zeros(g), 0.5)


# ---------------------------------------------------------------------------
# Korn equivalence


def test_korn_suite_contents():
    g = periodic(2, 16)
    suite = korn_field_suite(g, n_random=5, seed=1)
    assert len(suite) == 8
    assert sum(name.startswith("near-rigid") for name in suite) == 3
    again = korn_field_suite(g, n_random=5, seed=1)
    assert all(np.array_equal(suite[k].values, again[k].values) for k in suite)


@pytest.mark.parametrize("r", [math.inf, 1.0])
@pytest.mark.parametrize("cone", [DoubleCone.full(2), DoubleCone.single((1.0, 0.0), 0.5)])
def test_korn_equivalence_certified(r, cone):
    spec = FractionalCone(0.25, cone, r=r)
    g = periodic(2, 32)
    rep = korn_equivalence(spec, g, korn_field_suite(g, n_random=20, seed=2))
    assert 0 < rep.C1_est <= rep.C2_est
    assert rep.C1_est >= rep.lower_reference * 0.95
    assert rep.C2_est <= rep.upper_reference * 1.05
    assert rep.fields_tested == 23
    if math.isinf(r):
        assert rep.beta_r == 0.0
    else:
        assert rep.beta_r == pytest.approx(cone_tail_mass(cone, 0.25, 1.0), rel=1e-12)


def test_korn_rejects_bad_inputs():
    spec = FractionalCone(0.25, DoubleCone.full(2))
    with pytest.raises(InvalidArgumentError):
        korn_equivalence(spec, Grid(2, (8, 8), 1 / 8))
    with pytest.raises(InvalidArgumentError):
        korn_equivalence(example1(2), periodic(2, 8))
    with pytest.raises(InvalidArgumentError):
        korn_equivalence(spec, periodic(2, 8), {})


# ---------------------------------------------------------------------------
# Poincare-Korn constant


def test_pk_stable_under_refinement():
    spec = example1(1)
    vals = [pk_constant(spec, interval_mask(h)) for h in (1 / 32, 1 / 64, 1 / 128)]
    assert all(v > 0 for v in vals)
    assert max(vals) / min(vals) <= 1.2


def test_pk_converged_eigenpair():
    spec = example1(1)
    mask = interval_mask(1 / 32)
    info = pk_constant(spec, mask, return_info=True)
    assert info.residual <= 1e-8
    assert info.C_P == pytest.approx(1 / info.lambda_min)
    # the returned vector attains the Rayleigh quotient
    from nlelast.operators import assemble_stiffness
    K = 2 * assemble_stiffness(spec, mask, part="sym").matrix
    v = info.eigenvector
    assert float(v @ (K @ v)) / (float(v @ v) * mask.grid.cell_volume) == pytest.approx(info.lambda_min, rel=1e-8)


def test_pk_monotone_in_domain():
    # fields vanishing outside the smaller interval are admissible for the larger one
    spec = example1(1)
    grid = Grid.covering((0.0,), (1.0,), 1 / 32, 1.0)
    small = DomainMask.box(grid, (0.25,), (0.75,))
    large = DomainMask.box(grid, (0.0,), (1.0,))
    assert pk_constant(spec, small) <= pk_constant(spec, large)


def test_pk_thin_cone_is_degenerate():
    grid = Grid.covering((0.0, 0.0), (1.0, 1.0), 1 / 8, 0.5)
    mask = DomainMask.box(grid, (0.0, 0.0), (1.0, 1.0))
    spec = FractionalCone(0.5, DoubleCone.single((1.0, 0.0), 1e-3), r=0.5)
    with pytest.raises(CoercivityViolationError):
        pk_constant(spec, mask)


# ---------------------------------------------------------------------------
# rigid motions


def rigid(grid, a=0.7, b=(0.3, -1.2)):
    X = grid.coordinates()
    return np.stack([a * X[1] + b[0], -a * X[0] + b[1]])


def test_rigid_exact():
    g = Grid(2, (10, 10), 0.1)
    fit = rigid_motion_test(GridField(g, rigid(g)), tol=1e-10)
    assert fit.is_rigid
    assert fit.A[0, 1] == pytest.approx(0.7) and fit.A[1, 0] == pytest.approx(-0.7)
    assert np.allclose(fit.b, [0.3, -1.2])


def test_identity_field_is_not_rigid():
    g = Grid(2, (10, 10), 0.1)
    fit = rigid_motion_test(GridField(g, g.coordinates()), tol=1e-2)
    assert not fit.is_rigid
    assert fit.max_projected_difference > 0.1


@pytest.mark.parametrize("tol,expected", [(1e-2, True), (1e-4, False)])
def test_rigid_with_noise(tol, expected, rng):
    g = Grid(2, (10, 10), 0.1)
    u = rigid(g) + 1e-3 * rng.uniform(-1, 1, (2, 10, 10))
    assert rigid_motion_test(GridField(g, u), tol=tol).is_rigid is expected


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_rigid_family(a, b0, b1):
    g = Grid(2, (6, 6), 1 / 6)
    assert rigid_motion_test(GridField(g, rigid(g, a, (b0, b1))), tol=1e-9, n_pairs=500).is_rigid


# ---------------------------------------------------------------------------
# cutoffs and localization


def test_smoothstep_profile_shape():
    X = np.linspace(0, 1, 101)[None]
    eta = smoothstep_profile(X, 0.5, 0.1, 0.3)
    r = np.abs(X[0] - 0.5)
    assert np.all(eta[r <= 0.1] == 1.0) and np.all(eta[r >= 0.3] == 0.0)
    assert np.all((eta >= 0) & (eta <= 1))
    assert np.all(np.diff(eta[X[0] <= 0.5]) >= 0)
    with pytest.raises(InvalidArgumentError):
        smoothstep_profile(X, 0.5, 0.3, 0.1)


def loc_setup(h=1 / 32):
    spec = FractionalCone(0.5, DoubleCone.full(1), r=0.25)
    grid = Grid.covering((0.0,), (1.0,), h, 0.25)
    mask = DomainMask.box(grid, (0.0,), (1.0,))
    return spec, grid, mask


def test_localization_identity():
    spec, grid, mask = loc_setup()
    u = GridField.from_function(grid, lambda X: np.sin(3 * X) + X ** 2)
    eta = smoothstep_cutoff(grid, 0.5, 0.1, 0.3)
    res = localization_residual(spec, u, eta, mask)
    lhs = apply_Ln(spec, GridField(grid, u.values * eta[None])).values - eta[None] * apply_Ln(spec, u).values
    assert np.abs(lhs - res.g.values).max() <= 1e-12 * np.abs(lhs).max()
    Leta_u, Is = localization_terms(spec, u, eta)
    assert np.allclose(Leta_u.values - Is.values, res.g.values, atol=1e-10)
    assert np.allclose(res.I1.values + res.I2.values, res.g.values)


def test_localization_constant_cutoff():
    spec, grid, mask = loc_setup()
    u = GridField.from_function(grid, lambda X: np.cos(5 * X))
    res = localization_residual(spec, u, np.ones(grid.shape))
    assert res.g_norm == 0.0


def test_localization_rigid_field_has_no_commutator_integral():
    spec, grid, mask = loc_setup()
    u = GridField.from_function(grid, lambda X: np.full_like(X, 2.5))
    _, Is = localization_terms(spec, u, smoothstep_cutoff(grid, 0.5, 0.1, 0.3))
    assert np.abs(Is.values).max() <= 1e-12


def test_localization_constant_stable():
    cs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        spec, grid, mask = loc_setup(h)
        u = GridField.from_function(grid, lambda X: np.exp(-((X - 0.5) / 0.2) ** 2))
        cs.append(localization_residual(spec, u, smoothstep_cutoff(grid, 0.5, 0.1, 0.3), mask).constants["C"])
    assert max(cs) / min(cs) <= 1.5


def test_invalid_cutoffs():
    spec, grid, mask = loc_setup()
    u = GridField.zeros(grid)
    with pytest.raises(InvalidCutoffError):
        localization_residual(spec, u, np.ones(grid.shape), mask)
    with pytest.raises(InvalidCutoffError):
        localization_residual(spec, u, np.ones(3), mask)


# ---------------------------------------------------------------------------
# interior regularity


def jump_rhs(X):
    return np.where((X > 0.4) & (X < 0.7), 1.0, 0.0)


def cutoff(X):
    return smoothstep_profile(X, 0.5, 0.15, 0.3)


REG_SPEC = FractionalCone(0.25, DoubleCone.full(1), r=0.5)


def test_critical_exponent():
    assert critical_exponent(1, 0.25) == pytest.approx(4.0)
    assert critical_exponent(2, 0.5) == pytest.approx(4.0)
    assert math.isinf(critical_exponent(1, 0.5))


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_regularity_ratios_bounded(p):
    rep = interior_regularity_study(REG_SPEC, jump_rhs, ((0.0,), (1.0,)), cutoff, p=p,
                                    levels=(1 / 32, 1 / 64, 1 / 128), collar=0.5)
    assert rep.passed
    assert max(rep.ratios) / min(rep.ratios) <= 2.0
    assert len(rep.levels) == 3 and rep.p == p


def test_regularity_above_critical_needs_evidence():
    with pytest.raises(InvalidArgumentError):
        interior_regularity_study(REG_SPEC, jump_rhs, ((0.0,), (1.0,)), cutoff, p=5.0, levels=(1 / 16,))
    with pytest.raises(InvalidArgumentError):
        interior_regularity_study(REG_SPEC, jump_rhs, ((0.0,), (1.0,)), cutoff, p=1.5, levels=(1 / 16,))


def test_regularity_rejects_cutoff_touching_exterior():
    with pytest.raises(InvalidCutoffError):
        interior_regularity_study(REG_SPEC, jump_rhs, ((0.0,), (1.0,)), lambda X: np.ones(X.shape[1:]),
                                  levels=(1 / 16,), collar=0.5)
