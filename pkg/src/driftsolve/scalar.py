"""Monotone solver for the scalar constraint equation with gradient terms.

The equation, in residual form with the positive Laplacian, is

    lap(u) + h u - f u^(q-1) - a u^(-q-1) + b/u
           + <grad u, Y>^2 u^(-q-3)
           + c <grad u, Y> (d u^(-2) + u^(-q-2))  =  0,

with q the critical exponent of the grid dimension.  ``a`` and ``f`` must be
strictly positive; ``b``, ``c``, ``d``, ``h`` may have either sign.  An upper
barrier ("supersolution") is a positive field with residual >= 0; a constant
lower barrier epsilon0 comes from a closed-form recipe.  The outer iteration
sweeps upward from epsilon0: each sweep freezes the zeroth-order
nonlinearities at the previous iterate, shifts both sides by K u with K large
enough to make the sweep order-preserving, and solves the resulting
gradient-quadratic problem.  Iterates then increase monotonically and stay
below the barrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonConvergence,
    NonPositiveField,
    NoSubsolution,
    NoSupersolutionFound,
    NotASupersolution,
)
from .grid import ScalarField, VectorField, gradient, laplacian, solve_scalar_linear


@dataclass
class LichCoefficients:
    """Coefficient set of the scalar equation.

    ``a`` and ``f`` are validated strictly positive; the rest are free.
    """

    a: ScalarField
    b: ScalarField
    c: ScalarField
    d: ScalarField
    f: ScalarField
    h: ScalarField
    Y: VectorField

    def __post_init__(self):
        if self.a.values.min() <= 0:
            raise NonPositiveField(f"coefficient a must be > 0, min {self.a.values.min()}")
        if self.f.values.min() <= 0:
            raise NonPositiveField(f"coefficient f must be > 0, min {self.f.values.min()}")


def scalar_residual(u, coeffs):
    """Evaluate the equation residual at a positive field ``u``."""
    if u.values.min() <= 0:
        raise NonPositiveField(f"residual needs u > 0, min {u.values.min()}")
    g = u.grid
    q = g.q
    uv = u.values
    s = np.sum(gradient(u).values * coeffs.Y.values, axis=0)
    r = (laplacian(u).values + coeffs.h.values * uv
         - coeffs.f.values * uv ** (q - 1.0)
         - coeffs.a.values * uv ** (-q - 1.0)
         + coeffs.b.values / uv
         + s**2 * uv ** (-q - 3.0)
         + coeffs.c.values * s * (coeffs.d.values * uv**-2 + uv ** (-q - 2.0)))
    return ScalarField(g, r)


# --------------------------------------------------------------- lower barrier


def pick_epsilon0(psi, coeffs):
    """Constant lower barrier below the upper barrier ``psi``.

    Takes 90% of the smallest of: inf(psi); the level where the
    ``a``-term dominates ``h`` when sup(h) > 0; and the level where it
    dominates ``b`` when sup(b) > 0.
    """
    if psi.values.min() <= 0:
        raise NoSubsolution(
            f"upper barrier must be strictly positive, min {psi.values.min()}")
    q = psi.grid.q
    a_lo = coeffs.a.values.min()
    candidates = [float(psi.values.min())]
    h_hi = coeffs.h.values.max()
    if h_hi > 0:
        candidates.append(float((a_lo / (2.0 * h_hi)) ** (1.0 / (q + 2.0))))
    b_hi = coeffs.b.values.max()
    if b_hi > 0:
        candidates.append(float((a_lo / (2.0 * b_hi)) ** (1.0 / q)))
    return 0.9 * min(candidates)


def compute_K(coeffs, eps0, sup_psi, n_tgrid=256):
    """Monotonicity shift for the sweep map on the interval [eps0, sup_psi].

    Scans a geometric grid of trial levels, bounding the derivative of the
    frozen nonlinearity from above with worst-case coefficient bounds, and
    also forces the frozen zeroth-order block to stay negative.
    """
    q = coeffs.a.grid.q
    t = np.geomspace(eps0, sup_psi, n_tgrid)
    f_lo = coeffs.f.values.min()
    a_hi = coeffs.a.values.max()
    a_lo = coeffs.a.values.min()
    b_lo = coeffs.b.values.min()
    b_hi = coeffs.b.values.max()
    c_hi = np.abs(coeffs.c.values).max()
    d_hi = np.abs(coeffs.d.values).max()

    bracket = (-(q - 1.0) * f_lo * t ** (q - 2.0)
               + (q + 1.0) * a_hi * t ** (-q - 2.0)
               - b_lo * t**-2
               + c_hi**2 * (2.0 * d_hi * t**-3 + (q + 2.0) * t ** (-q - 3.0)) ** 2
               * t ** (q + 4.0) / (4.0 * (q + 3.0)))
    negativity = (-f_lo * t ** (q - 1.0) - a_lo * t ** (-q - 1.0) + b_hi / t) / t
    return 1.1 * max(float(bracket.max()), -float(coeffs.h.values.min()),
                     float(negativity.max()), 1e-2)


# ----------------------------------------------------------------- inner solve


@dataclass
class GenEqData:
    """One sweep's frozen problem: lap(u) + H u + th1 s^2 + th2 s + th3 = 0
    with s = <grad u, Z>.  Requires H > 0 and th3 < 0 pointwise, which makes
    the constant levels inf(-th3/H) and sup(-th3/H) a solution bracket."""

    H: ScalarField
    th1: ScalarField
    th2: ScalarField
    th3: ScalarField
    Z: VectorField

    def __post_init__(self):
        if self.H.values.min() <= 0:
            raise NonPositiveField(f"H must be > 0, min {self.H.values.min()}")
        if self.th3.values.max() >= 0:
            raise NonPositiveField(f"th3 must be < 0, max {self.th3.values.max()}")


def _gen_eq_residual(data, uv):
    g = data.H.grid
    u = ScalarField(g, uv)
    out = laplacian(u).values + data.H.values * uv + data.th3.values
    if np.any(data.Z.values):
        s = np.sum(gradient(u).values * data.Z.values, axis=0)
        out += data.th1.values * s**2 + data.th2.values * s
    return out


def solve_gen_eq(data, u_init, tol=None, max_newton=50, verbose=False):
    """Solve the frozen sweep problem by damped Newton (direct when linear).

    With ``Z == 0`` the problem is linear and handled in one solve.
    Otherwise Newton linearizes the gradient terms into a drift
    ``(2 th1 s + th2) Z`` and backtracks on the sup-norm of the residual;
    a damped Picard pass takes over if a Newton step cannot decrease it.
    """
    g = data.H.grid
    scale = max(1.0, float(np.abs(data.th3.values).max()))
    if tol is None:
        tol = 1e-11 * scale

    if not np.any(data.Z.values):
        rhs = ScalarField(g, -data.th3.values)
        return solve_scalar_linear(g, data.H, None, rhs)

    uv = u_init.values.copy()
    res = _gen_eq_residual(data, uv)
    for it in range(max_newton):
        res_sup = np.abs(res).max()
        if verbose:
            print(f"    newton {it}: residual {res_sup:.3e}")
        if res_sup <= tol:
            return ScalarField(g, uv)
        s = np.sum(gradient(ScalarField(g, uv)).values * data.Z.values, axis=0)
        drift = VectorField(
            g, (2.0 * data.th1.values * s + data.th2.values) * data.Z.values)
        delta = solve_scalar_linear(g, data.H, drift,
                                    ScalarField(g, -res), tol=1e-12).values
        lam, improved = 1.0, False
        for _ in range(12):
            trial = uv + lam * delta
            res_t = _gen_eq_residual(data, trial)
            if np.all(np.isfinite(res_t)) and np.abs(res_t).max() < res_sup:
                uv, res, improved = trial, res_t, True
                break
            lam *= 0.5
        if not improved:
            # damped Picard fallback: refreeze the whole gradient block
            for _ in range(200):
                s = np.sum(gradient(ScalarField(g, uv)).values * data.Z.values, axis=0)
                frozen = ScalarField(
                    g, -(data.th1.values * s**2 + data.th2.values * s
                         + data.th3.values))
                new = solve_scalar_linear(g, data.H, None, frozen).values
                uv = 0.5 * (uv + new)
                res = _gen_eq_residual(data, uv)
                if np.abs(res).max() <= tol:
                    return ScalarField(g, uv)
            raise NonConvergence("inner gradient-quadratic solve stalled",
                                 iterations=it, residual=float(np.abs(res).max()))
    raise NonConvergence("inner Newton ran out of iterations",
                         iterations=max_newton, residual=float(np.abs(res).max()))


# -------------------------------------------------------------- outer sweeps


@dataclass
class MonotoneTrace:
    eps0: float
    K: float
    steps: list = field(default_factory=list)
    mins: list = field(default_factory=list)
    final_residual: float = np.inf

    @property
    def iterate_count(self):
        return len(self.steps)


def monotone_iterate(coeffs, psi, step_tol=1e-10, tol_outer=1e-9,
                     max_outer=2000, callback=None, verbose=False):
    """Sweep upward from the constant lower barrier to a solution below ``psi``.

    Parameters
    ----------
    coeffs : LichCoefficients
    psi : ScalarField
        Verified upper barrier (residual >= -1e-8 pointwise).
    step_tol, tol_outer : float
        Stop once the sup-norm sweep step is below ``step_tol`` *and* the
        equation residual is below ``tol_outer``.
    max_outer : int
        Sweep budget.
    callback : callable, optional
        Called as ``callback(i, values)`` after sweep ``i`` with the new
        iterate's value array.

    Returns
    -------
    (ScalarField, MonotoneTrace)
    """
    g = psi.grid
    q = g.q
    eps0 = pick_epsilon0(psi, coeffs)
    barrier = scalar_residual(psi, coeffs).values
    if barrier.min() < -1e-8:
        node = np.unravel_index(int(np.argmin(barrier)), g.shape)
        raise NotASupersolution(node, float(barrier.min()))
    K = compute_K(coeffs, eps0, float(psi.values.max()))
    trace = MonotoneTrace(eps0=eps0, K=K)
    h_shift = ScalarField(g, coeffs.h.values + K)

    uv = np.full(g.shape, eps0)
    u = ScalarField(g, uv)
    for it in range(max_outer):
        th3 = ScalarField(
            g, -coeffs.f.values * uv ** (q - 1.0)
            - coeffs.a.values * uv ** (-q - 1.0)
            + coeffs.b.values / uv - K * uv)
        data = GenEqData(
            H=h_shift,
            th1=ScalarField(g, uv ** (-q - 3.0)),
            th2=ScalarField(g, coeffs.c.values
                            * (coeffs.d.values * uv**-2 + uv ** (-q - 2.0))),
            th3=th3,
            Z=coeffs.Y,
        )
        u = solve_gen_eq(data, u)
        step = float(np.abs(u.values - uv).max())
        uv = u.values
        resid = float(np.abs(scalar_residual(u, coeffs).values).max())
        trace.steps.append(step)
        trace.mins.append(float(uv.min()))
        trace.final_residual = resid
        if callback is not None:
            callback(it, uv)
        if verbose and it % 50 == 0:
            print(f"  sweep {it}: step {step:.3e}, residual {resid:.3e}")
        if step < step_tol and resid <= tol_outer:
            return u, trace
    raise NonConvergence("monotone sweeps did not settle",
                         iterations=max_outer, residual=trace.final_residual)


# ------------------------------------------------------------- upper barriers


def _constant_margin(h, f, at, t):
    """Worst-case residual of the constant field t."""
    q = h.grid.q
    vals = (h.values * t - f.values * t ** (q - 1.0)
            - at.values * t ** (-q - 1.0))
    return float(vals.min())


def find_supersolution(h, f, a_tilde, verbose=False):
    """Search for an upper barrier of the reduced equation (b = c = 0, Y = 0).

    Stage one scans constant levels on a wide geometric grid and polishes
    the best one by bounded 1-d maximization of the worst-case margin.
    If no constant works, stage two runs damped Newton for an exact
    nonconstant solution of the reduced equation starting from the best
    constant.  Raises NoSupersolutionFound with the best constant and its
    defect if both stages fail.
    """
    from scipy.optimize import minimize_scalar

    g = h.grid
    q = g.q
    if f.values.min() <= 0:
        raise NonPositiveField(f"f must be > 0, min {f.values.min()}")
    if a_tilde.values.min() <= 0:
        raise NonPositiveField(f"a-level must be > 0, min {a_tilde.values.min()}")

    # balance point of the two negative terms sets the natural scale
    t_mid = (max(np.abs(h.values).max(), 1.0) / f.values.min()) ** (1.0 / (q - 2.0))
    t_grid = np.geomspace(1e-3 * t_mid, 1e3 * t_mid, 1024)
    margins = [_constant_margin(h, f, a_tilde, t) for t in t_grid]
    i_best = int(np.argmax(margins))
    lo = t_grid[max(i_best - 1, 0)]
    hi = t_grid[min(i_best + 1, len(t_grid) - 1)]
    opt = minimize_scalar(lambda t: -_constant_margin(h, f, a_tilde, t),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13})
    best_t = float(opt.x)
    best_margin = _constant_margin(h, f, a_tilde, best_t)
    if verbose:
        print(f"  constant barrier scan: t = {best_t:.6g}, margin = {best_margin:.3e}")
    if best_margin >= -1e-8:
        return ScalarField(g, np.full(g.shape, best_t))

    # stage two: exact nonconstant solution of the reduced equation
    uv = np.full(g.shape, best_t)

    def reduced_residual(vals):
        u = ScalarField(g, vals)
        return (laplacian(u).values + h.values * vals
                - f.values * vals ** (q - 1.0)
                - a_tilde.values * vals ** (-q - 1.0))

    res = reduced_residual(uv)
    for _ in range(60):
        if np.abs(res).max() <= 1e-10:
            return ScalarField(g, uv)
        zeroth = ScalarField(
            g, h.values - (q - 1.0) * f.values * uv ** (q - 2.0)
            + (q + 1.0) * a_tilde.values * uv ** (-q - 2.0))
        try:
            delta = solve_scalar_linear(g, zeroth, None,
                                        ScalarField(g, -res), tol=1e-11).values
        except Exception:
            break
        lam, improved = 1.0, False
        for _ in range(15):
            trial = uv + lam * delta
            if trial.min() > 0:
                res_t = reduced_residual(trial)
                if np.all(np.isfinite(res_t)) and np.abs(res_t).max() < np.abs(res).max():
                    uv, res, improved = trial, res_t, True
                    break
            lam *= 0.5
        if not improved:
            break
    raise NoSupersolutionFound(best_defect=best_margin, best_value=best_t)
