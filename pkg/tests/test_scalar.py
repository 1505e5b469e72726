"""Monotone scalar solver: barrier constants, inner solve, outer iteration."""

import numpy as np
import pytest

from driftsolve.errors import (
    NonPositiveField,
    NoSubsolution,
    NoSupersolutionFound,
    NotASupersolution,
)
from driftsolve.grid import GridSpec, ScalarField, gradient, laplacian, sup_norm
from driftsolve.scalar import (
    GenEqData,
    LichCoefficients,
    compute_K,
    find_supersolution,
    monotone_iterate,
    pick_epsilon0,
    scalar_residual,
    solve_gen_eq,
)

import oracles
from util import const_s, const_v, mesh, sin_s, vec_with, zero_v


def constant_coeffs(grid, a=0.5, f=0.5, h=1.0, b=0.0, c=0.0, d=0.0):
    return LichCoefficients(
        a=const_s(grid, a),
        b=const_s(grid, b),
        c=const_s(grid, c),
        d=const_s(grid, d),
        f=const_s(grid, f),
        h=const_s(grid, h),
        Y=zero_v(grid),
    )


def manufactured_b(grid, u_star, coeffs):
    """Independent evaluation of the b-slot that makes u_star an exact solution."""
    q = grid.q
    u = u_star.values
    gu = gradient(u_star).values
    s = sum(gu[j] * coeffs.Y.values[j] for j in range(grid.dim))
    core = (
        coeffs.f.values * u ** (q - 1)
        + coeffs.a.values * u ** (-q - 1)
        - laplacian(u_star).values
        - coeffs.h.values * u
        - s**2 * u ** (-q - 3)
        - coeffs.c.values * s * (coeffs.d.values * u**-2 + u ** (-q - 2))
    )
    return ScalarField(grid, u * core)


def with_b(coeffs, b_field):
    return LichCoefficients(
        a=coeffs.a, b=b_field, c=coeffs.c, d=coeffs.d,
        f=coeffs.f, h=coeffs.h, Y=coeffs.Y,
    )


# ------------------------------------------------------------ lower barrier


def test_pick_epsilon0_reference_value():
    g = GridSpec(dim=3, n_axis=16)
    eps0 = pick_epsilon0(const_s(g, 1.1), constant_coeffs(g))
    assert eps0 == pytest.approx(0.756806773728343, rel=1e-14)


def test_pick_epsilon0_only_psi_binds():
    g = GridSpec(dim=3, n_axis=16)
    coeffs = constant_coeffs(g, h=-0.3)
    assert pick_epsilon0(const_s(g, 1.1), coeffs) == pytest.approx(0.99, rel=1e-14)


def test_pick_epsilon0_b_bound():
    g = GridSpec(dim=3, n_axis=16)
    coeffs = constant_coeffs(g, b=2.0)
    expected = 0.9 * (0.5 / 4.0) ** (1.0 / 6.0)
    assert pick_epsilon0(const_s(g, 1.1), coeffs) == pytest.approx(expected, rel=1e-14)


def test_pick_epsilon0_monotone_in_a():
    g = GridSpec(dim=3, n_axis=16)
    psi = const_s(g, 1.1)
    e1 = pick_epsilon0(psi, constant_coeffs(g, a=0.5))
    e2 = pick_epsilon0(psi, constant_coeffs(g, a=1.0))
    assert e2 >= e1


def test_pick_epsilon0_rejects_nonpositive_psi():
    g = GridSpec(dim=3, n_axis=16)
    with pytest.raises(NoSubsolution):
        pick_epsilon0(const_s(g, -0.5), constant_coeffs(g))
    with pytest.raises(NoSubsolution):
        pick_epsilon0(sin_s(g), constant_coeffs(g))


# ------------------------------------------------------------- shift policy


def test_compute_K_reference_value():
    g = GridSpec(dim=3, n_axis=16)
    k = compute_K(constant_coeffs(g), 0.756806773728343, 1.1)
    assert k == pytest.approx(34.87294511314494, rel=1e-12)


def test_compute_K_refinement_agreement():
    g = GridSpec(dim=3, n_axis=16)
    coeffs = constant_coeffs(g, b=0.4, c=0.3, d=0.7)
    k256 = compute_K(coeffs, 0.7, 1.3)
    k4096 = compute_K(coeffs, 0.7, 1.3, n_tgrid=4096)
    assert abs(k256 - k4096) <= 0.005 * abs(k4096)


def test_compute_K_nonincreasing_in_eps0():
    g = GridSpec(dim=3, n_axis=16)
    coeffs = constant_coeffs(g)
    assert compute_K(coeffs, 0.85, 1.1) <= compute_K(coeffs, 0.7568, 1.1)


def test_compute_K_c_term_vanishes():
    g = GridSpec(dim=3, n_axis=16)
    k_plain = compute_K(constant_coeffs(g), 0.7568, 1.1)
    k_d_only = compute_K(constant_coeffs(g, d=5.0), 0.7568, 1.1)
    assert k_plain == k_d_only  # d enters only through the c-weighted term


# -------------------------------------------------------------- inner solve


def test_gen_eq_constant_data():
    g = GridSpec(dim=3, n_axis=16)
    data = GenEqData(
        H=const_s(g, 1.0), th1=const_s(g, 1.0), th2=const_s(g, 0.0),
        th3=const_s(g, -2.0), Z=zero_v(g),
    )
    u = solve_gen_eq(data, const_s(g, 1.0))
    assert np.abs(u.values - 2.0).max() <= 1e-12


def test_gen_eq_invariants_checked():
    g = GridSpec(dim=3, n_axis=16)
    with pytest.raises(NonPositiveField):
        GenEqData(H=const_s(g, 0.0), th1=const_s(g, 1.0), th2=const_s(g, 0.0),
                  th3=const_s(g, -2.0), Z=zero_v(g))
    with pytest.raises(NonPositiveField):
        GenEqData(H=const_s(g, 1.0), th1=const_s(g, 1.0), th2=const_s(g, 0.0),
                  th3=const_s(g, 0.5), Z=zero_v(g))


def gen_eq_example(grid):
    return GenEqData(
        H=const_s(grid, 1.0),
        th1=const_s(grid, 1.0),
        th2=const_s(grid, 0.0),
        th3=ScalarField(grid, -(2.0 + sin_s(grid, axis=0).values)),
        Z=const_v(grid, (1.0, 0.0, 0.0)),
    )


def test_gen_eq_variable_case_bounds_and_residual():
    g = GridSpec(dim=3, n_axis=16)
    data = gen_eq_example(g)
    u = solve_gen_eq(data, const_s(g, 2.0))
    assert u.values.min() >= 1.0 - 1e-9
    assert u.values.max() <= 3.0 + 1e-9
    gu = gradient(u).values
    s = gu[0]
    resid = laplacian(u).values + u.values + s**2 + data.th3.values
    assert np.abs(resid).max() <= 1e-10


def test_gen_eq_unique_from_different_starts():
    g = GridSpec(dim=3, n_axis=16)
    data = gen_eq_example(g)
    u1 = solve_gen_eq(data, const_s(g, 1.05))
    u2 = solve_gen_eq(data, const_s(g, 2.9))
    assert np.abs(u1.values - u2.values).max() <= 1e-8


def test_gen_eq_matches_dense_newton():
    g = GridSpec(dim=3, n_axis=8)
    data = gen_eq_example(g)
    u = solve_gen_eq(data, const_s(g, 2.0))
    ref = oracles.dense_newton_quadratic_gradient(
        3, 8, 1.0, 1.0, 0.0, data.th3.values, (1.0, 0.0, 0.0)
    )
    assert np.abs(u.values - ref).max() <= 1e-8


# ----------------------------------------------------------- outer iteration


def test_monotone_constant_configuration():
    g = GridSpec(dim=3, n_axis=16)
    u, trace = monotone_iterate(constant_coeffs(g), const_s(g, 1.1))
    assert np.abs(u.values - 1.0).max() <= 5e-9
    assert trace.eps0 == pytest.approx(0.756806773728343, rel=1e-13)
    assert trace.K == pytest.approx(34.87294511314494, rel=1e-12)
    assert trace.final_residual <= 1e-9
    assert trace.iterate_count == len(trace.steps)
    mins = np.array(trace.mins)
    assert np.all(np.diff(mins) >= -1e-12)


def test_monotone_tight_tolerances_reach_constant():
    g = GridSpec(dim=3, n_axis=16)
    u, _ = monotone_iterate(
        constant_coeffs(g), const_s(g, 1.1),
        step_tol=1e-13, tol_outer=1e-10, max_outer=2000,
    )
    assert np.abs(u.values - 1.0).max() <= 1e-10


def test_monotone_manufactured_recovery():
    g = GridSpec(dim=3, n_axis=16)
    u_star = sin_s(g, amp=0.05, offset=1.0)
    base = constant_coeffs(g)
    coeffs = with_b(base, manufactured_b(g, u_star, base))
    iterates = []
    u, trace = monotone_iterate(coeffs, u_star, callback=lambda i, v: iterates.append(v.copy()))
    assert sup_norm(ScalarField(g, scalar_residual(u, coeffs).values)) <= 1e-9
    assert np.all(u.values <= u_star.values + 1e-9)
    # monotone invariants on every recorded iterate
    eps0 = trace.eps0
    prev = None
    for vals in iterates:
        assert vals.min() >= eps0 - 1e-12
        assert np.all(vals <= u_star.values + 1e-9)
        if prev is not None:
            assert np.all(vals >= prev - 1e-12)
        prev = vals
    assert len(iterates) == trace.iterate_count


def test_monotone_ordering_in_a():
    g = GridSpec(dim=3, n_axis=16)
    psi = const_s(g, 1.1)
    u1, _ = monotone_iterate(constant_coeffs(g, a=0.5), psi)
    u2, _ = monotone_iterate(constant_coeffs(g, a=0.55), psi)
    assert np.all(u1.values <= u2.values + 1e-9)


def test_monotone_rejects_bad_supersolution():
    g = GridSpec(dim=3, n_axis=16)
    with pytest.raises(NotASupersolution) as info:
        monotone_iterate(constant_coeffs(g), const_s(g, 0.5))
    assert info.value.defect < 0


def test_monotone_exact_supersolution_stays_below():
    g = GridSpec(dim=3, n_axis=16)
    u_star = sin_s(g, amp=0.05, offset=1.0)
    base = constant_coeffs(g)
    coeffs = with_b(base, manufactured_b(g, u_star, base))
    u, _ = monotone_iterate(coeffs, u_star)
    assert np.all(u.values <= u_star.values + 1e-9)


# ------------------------------------------------------------ supersolutions


def test_find_supersolution_constant_scan():
    g = GridSpec(dim=3, n_axis=16)
    psi = find_supersolution(const_s(g, 1.0), const_s(g, 0.5), const_s(g, 0.5))
    assert psi.values.max() - psi.values.min() <= 1e-14  # constant
    t = float(psi.values.flat[0])
    defect = t - 0.5 * t**5 - 0.5 * t**-7
    assert defect >= -1e-8


def test_find_supersolution_exact_root():
    g = GridSpec(dim=3, n_axis=16)
    psi = find_supersolution(const_s(g, 2.0), const_s(g, 1.0), const_s(g, 1.0))
    t = float(psi.values.flat[0])
    assert 2.0 * t - t**5 - t**-7 >= -1e-8


def test_find_supersolution_near_threshold():
    # constants exist iff sup_t (t^8 - f t^12) >= a-level; h=1, f=0.5 puts it at 16/27
    g = GridSpec(dim=3, n_axis=16)
    psi = find_supersolution(const_s(g, 1.0), const_s(g, 0.5), const_s(g, 0.58))
    t = float(psi.values.flat[0])
    assert t - 0.5 * t**5 - 0.58 * t**-7 >= -1e-8
    with pytest.raises(NoSupersolutionFound) as info:
        find_supersolution(const_s(g, 1.0), const_s(g, 0.5), const_s(g, 0.61))
    assert info.value.best_defect < 0


def test_find_supersolution_large_a_certificate():
    g = GridSpec(dim=3, n_axis=16)
    with pytest.raises(NoSupersolutionFound) as info:
        find_supersolution(const_s(g, 1.0), const_s(g, 1.0), const_s(g, 1e6))
    assert info.value.best_defect < 0


def test_find_supersolution_newton_fallback():
    # h dips low enough that no constant works, but a nonconstant profile exists
    g = GridSpec(dim=3, n_axis=16)
    h = sin_s(g, amp=0.9, offset=1.0)
    f = const_s(g, 0.5)
    at = const_s(g, 0.03)
    psi = find_supersolution(h, f, at)
    assert psi.values.min() > 0
    assert psi.values.max() - psi.values.min() > 1e-3  # genuinely nonconstant
    defect = (
        laplacian(psi).values + h.values * psi.values
        - f.values * psi.values**5 - at.values * psi.values**-7
    )
    assert defect.min() >= -1e-8


# ----------------------------------------------------------------- residual


def test_scalar_residual_constant_zero():
    g = GridSpec(dim=3, n_axis=16)
    r = scalar_residual(const_s(g, 1.0), constant_coeffs(g))
    assert np.abs(r.values).max() <= 1e-14


def test_scalar_residual_affine_in_b():
    g = GridSpec(dim=3, n_axis=16)
    x = mesh(g)
    u = ScalarField(g, 1.0 + 0.2 * np.sin(x[0] + x[1] + x[2]) + np.zeros(g.shape))
    base = constant_coeffs(g, b=0.3)
    doubled = constant_coeffs(g, b=0.6)
    r1 = scalar_residual(u, base).values
    r2 = scalar_residual(u, doubled).values
    assert np.allclose(r2 - r1, 0.3 / u.values, atol=1e-13)


def test_scalar_residual_supersolution_sign():
    g = GridSpec(dim=3, n_axis=16)
    r = scalar_residual(const_s(g, 1.1), constant_coeffs(g))
    assert r.values.min() == pytest.approx(0.03816594088464659, rel=1e-12)


def test_scalar_residual_rejects_nonpositive():
    g = GridSpec(dim=3, n_axis=16)
    with pytest.raises(NonPositiveField):
        scalar_residual(const_s(g, -1.0), constant_coeffs(g))


def test_coefficients_require_positive_a_and_f():
    g = GridSpec(dim=3, n_axis=16)
    with pytest.raises(NonPositiveField):
        constant_coeffs(g, a=0.0)
    with pytest.raises(NonPositiveField):
        constant_coeffs(g, f=-0.5)
