"""Independent verification helpers.

Two kinds of oracle live here: manufactured solutions for the scalar and
vector equations (exploiting the one coefficient slot each equation is
affine in), and a closed-form radial profile whose equation residual
benchmarks the discretization order on a code path fully separate from the
torus spectral operators.
"""

import math

import numpy as np

from .errors import NonPositiveField
from .grid import (
    ScalarField,
    SymTensorField,
    VectorField,
    conformal_killing,
    gradient,
    laplacian,
    tensor_divergence,
)


def _fd_weights(offsets, deriv):
    """Finite-difference weights on integer offsets for one derivative."""
    m = len(offsets)
    a = np.vander(np.asarray(offsets, dtype=np.float64), m,
                  increasing=True).T
    rhs = np.zeros(m)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(a, rhs)


def check_model_profile(f0, dim, r_max, n_points=4096):
    """Relative equation defect of the closed-form decaying radial profile.

    The profile ``U(r) = (1 + f0 r^2 / (n(n-2)))^(1-n/2)`` satisfies
    ``-(U'' + (n-1)U'/r) = f0 U^(q-1)`` exactly; the returned number is the
    maximum relative defect of that identity under 6th-order radial finite
    differences, so it measures the differencing scheme, not the profile.

    Parameters
    ----------
    f0 : float
        Strictly positive curvature scale of the profile.
    dim : int
        Spatial dimension ``n >= 3``.
    r_max : float
        Extent of the radial grid.
    n_points : int, optional
        Number of radial samples on ``[0, r_max]``.

    Returns
    -------
    float
    """
    if f0 <= 0:
        raise NonPositiveField(f"profile scale must be > 0, got {f0}")
    n = float(dim)
    q = 2.0 * n / (n - 2.0)
    r = np.linspace(0.0, r_max, n_points)
    h = r[1] - r[0]
    u = (1.0 + f0 * r**2 / (n * (n - 2.0))) ** (1.0 - n / 2.0)

    # Even reflection across r = 0 keeps centered stencils valid there.
    ext = np.concatenate([u[3:0:-1], u])
    c1 = _fd_weights(range(-3, 4), 1) / h
    c2 = _fd_weights(range(-3, 4), 2) / h**2
    du = np.empty_like(u)
    d2u = np.empty_like(u)
    du[: n_points - 3] = np.convolve(ext, c1[::-1], mode="valid")
    d2u[: n_points - 3] = np.convolve(ext, c2[::-1], mode="valid")
    # Biased 8-point stencils (still 6th order) for the right edge.
    tail = u[n_points - 8:]
    for i in range(n_points - 3, n_points):
        offs = np.arange(n_points - 8, n_points) - i
        du[i] = (_fd_weights(offs, 1) / h) @ tail
        d2u[i] = (_fd_weights(offs, 2) / h**2) @ tail

    lap = np.empty_like(u)
    lap[0] = -n * d2u[0]  # U'(r)/r -> U''(0) by symmetry
    lap[1:] = -(d2u[1:] + (n - 1.0) * du[1:] / r[1:])
    target = f0 * u ** (q - 1.0)
    return float(np.abs(lap - target).max() / np.abs(target).max())


def manufacture_scalar(u_star, coeffs):
    """Source coefficient making ``u_star`` an exact scalar-equation solution.

    The equation is affine in the sign-unconstrained source slot, so the
    slot value closing the residual at ``u_star`` is available in closed
    form; any value of that slot already present in ``coeffs`` is ignored.
    """
    if u_star.values.min() <= 0:
        raise NonPositiveField(
            f"u_star must be > 0, min {u_star.values.min()}")
    g = u_star.grid
    q = g.q
    uv = u_star.values
    s = np.sum(gradient(u_star).values * coeffs.Y.values, axis=0)
    rest = (laplacian(u_star).values + coeffs.h.values * uv
            - coeffs.f.values * uv ** (q - 1.0)
            - coeffs.a.values * uv ** (-q - 1.0)
            + s**2 * uv ** (-q - 3.0)
            + coeffs.c.values * s
            * (coeffs.d.values * uv**-2.0 + uv ** (-q - 2.0)))
    return ScalarField(g, -uv * rest)


def manufacture_momentum(w_star, rho3):
    """Vector source whose weighted-deformation solve recovers ``w_star``.

    Evaluates the divergence-form operator through the public grid
    operators rather than the solver's own apply routine, so the round
    trip crosses two independent code paths.
    """
    if rho3.values.min() <= 0:
        raise NonPositiveField(
            f"rho3 must be > 0, min {rho3.values.min()}")
    g = w_star.grid
    flux = SymTensorField(g, rho3.values * conformal_killing(w_star).values)
    return VectorField(g, tensor_divergence(flux).values)
