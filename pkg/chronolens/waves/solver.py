import logging

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import ndimage
from scipy.special import erf

from chronolens.exceptions import GridTooSmall, NaNDetected, PicardDiverged
from chronolens.waves.grid import background_coefficients, cell_volume, field_shape, make_field, spatial_axes, \
    time_axis, GridField, wave_speed

logger = logging.getLogger('waves.solver')


def _spatial_operator(grid):
    """
    Δ_h on the lattice in flux form (1/σ) Σ_i D_i⁻(κ_i D_i⁺ u), with σ = κ = 1 on the flat background.
    Values on the boundary are left at zero.
    """
    coefficients = background_coefficients(grid)
    d = grid.dim - 1
    inv_h2 = 1. / grid.h ** 2

    def apply(u):
        out = np.zeros_like(u)
        for axis in range(d):
            flux = np.diff(u, axis=axis)
            if coefficients is not None:
                flux = coefficients[1][axis] * flux
            inner = [slice(None)] * d
            inner[axis] = slice(1, -1)
            out[tuple(inner)] += np.diff(flux, axis=axis) * inv_h2
        if coefficients is not None:
            out /= coefficients[0]
        _dirichlet(out)
        return out
    return apply


def _dirichlet(u):
    for axis in range(u.ndim):
        edge = [slice(None)] * u.ndim
        edge[axis] = 0
        u[tuple(edge)] = 0.
        edge[axis] = -1
        u[tuple(edge)] = 0.


def check_domain(grid, probe, margin=2):
    """
    Verifies that the domain of dependence of a probe box stays inside the lattice, so that no reflection from
    the Dirichlet boundary can reach the probe. Checked with the largest wave speed from the first time level.

    :param probe: (lower, upper) space-time corners of the region where the solution is used
    :param margin: extra cells kept between the domain of dependence and the boundary
    :raises GridTooSmall: otherwise
    """
    lower, upper = np.asarray(probe[0], dtype=float), np.asarray(probe[1], dtype=float)
    speed = wave_speed(grid.background, grid.lower, grid.upper, grid.h)
    reach = speed * (min(upper[0], time_axis(grid)[-1]) - grid.t0) + margin * grid.h
    low = lower[1:] - reach
    high = upper[1:] + reach
    if np.any(low < np.array(grid.lower)) or np.any(high > np.array(grid.upper)):
        raise GridTooSmall("Domain of dependence [{}, {}] of the probe leaves the lattice [{}, {}]".format(
            low.tolist(), high.tolist(), list(grid.lower), list(grid.upper)))


def coefficient_field(grid, a):
    """
    The coefficient a as an array of the field shape; spatial arrays are constant in time.
    """
    return np.broadcast_to(np.asarray(a, dtype=float), field_shape(grid))


def _leapfrog(grid, forcing, nonlinear=None):
    """
    u^{n+1} = 2u^n - u^{n-1} + k² (Δ_h u^n + a^n (u^n)² - F^n) with u^0 = 0 and the Taylor start
    u^1 = -k²/2 F^0. Without `nonlinear` this is Q applied to F.
    """
    operator = _spatial_operator(grid)
    k2 = grid.k ** 2
    u = np.zeros(field_shape(grid))
    u[1] = -0.5 * k2 * forcing[0]
    _dirichlet(u[1])
    for n in range(1, grid.steps):
        rhs = operator(u[n]) - forcing[n]
        if nonlinear is not None:
            rhs += nonlinear[n] * u[n] ** 2
        u[n + 1] = 2. * u[n] - u[n - 1] + k2 * rhs
        _dirichlet(u[n + 1])
        if not np.isfinite(u[n + 1]).all():
            raise NaNDetected(n + 1)
    return u


def causal_solve(source, probe=None):
    """
    The causal inverse Q of □ = -∂t² + Δ_h on the lattice: solves □u = h with zero data before the source by
    explicit second order leapfrog with Dirichlet boundaries.

    :param source: :class:`~chronolens.waves.grid.GridField` h
    :param probe: optional probe box passed to :func:`check_domain`
    :raises NaNDetected: at the first non-finite time level
    :return: :class:`~chronolens.waves.grid.GridField` u = Q h
    """
    grid = source.grid
    if probe is not None:
        check_domain(grid, probe)
    if not np.any(source.values):
        return GridField(grid, np.zeros(field_shape(grid)))
    return GridField(grid, _leapfrog(grid, source.values))


def l2_norm(field):
    return float(np.sqrt(np.sum(field.values ** 2) * cell_volume(field.grid)))


def relative_error(field, reference):
    """
    ‖field - reference‖ / ‖reference‖ in the lattice L² norm, the absolute error when the reference vanishes
    """
    difference = np.asarray(getattr(field, 'values', field)) - np.asarray(getattr(reference, 'values', reference))
    scale = np.sqrt(np.sum(np.asarray(getattr(reference, 'values', reference)) ** 2))
    error = np.sqrt(np.sum(difference ** 2))
    return float(error / scale) if scale > 0 else float(error)


def nonlinear_solve(grid, a, f, eps, method='direct', tol=1e-10, max_iterations=200, probe=None):
    """
    Solves □u + a u² = ε f with zero data before the source.

    'direct' steps the equation explicitly, 'picard' iterates u_{m+1} = Q(ε f - a u_m²) from u_0 = 0 until
    the relative L² update is below `tol`. On the lattice both routes share the fixed point.

    :param a: scalar or array broadcastable to the field shape
    :param f: :class:`~chronolens.waves.grid.GridField` source
    :param eps: source amplitude ε
    :raises PicardDiverged: with the history of relative updates when Picard does not converge
    :return: :class:`~chronolens.waves.grid.GridField` u_ε
    """
    if probe is not None:
        check_domain(grid, probe)
    coefficient = coefficient_field(grid, a)
    forcing = eps * f.values
    if method == 'direct':
        return make_field(grid, _leapfrog(grid, forcing, coefficient))
    if method != 'picard':
        raise ValueError("Unknown nonlinear solve method '{}'".format(method))
    u = np.zeros(field_shape(grid))
    history = []
    for _ in range(max_iterations):
        try:
            updated = _leapfrog(grid, forcing - coefficient * u ** 2)
        except NaNDetected:
            raise PicardDiverged(history)
        scale = np.sqrt(np.sum(updated ** 2))
        change = np.sqrt(np.sum((updated - u) ** 2))
        history.append(float(change / scale) if scale > 0 else 0.)
        u = updated
        if history[-1] < tol:
            logger.debug("Picard converged after %d iterations", len(history))
            return GridField(grid, u)
    raise PicardDiverged(history)


def influence_mask(source):
    """
    Numerical domain of influence of supp(h): the lattice points that the leapfrog stencil can reach from
    points where the source is nonzero.

    :return: boolean array of the field shape
    """
    grid = source.grid
    support = source.values != 0.
    structure = ndimage.generate_binary_structure(grid.dim - 1, 1)
    mask = np.zeros(field_shape(grid), dtype=bool)
    mask[1] = support[0]
    _dirichlet(mask[1])
    for n in range(1, grid.steps):
        mask[n + 1] = ndimage.binary_dilation(mask[n], structure=structure) | mask[n - 1] | support[n]
        _dirichlet(mask[n + 1])
    return mask


def discrete_energy(field):
    """
    Leapfrog energy E^{n+1/2} = ½ Σ σ ((u^{n+1} - u^n) / k)² + ½ Σ_faces κ D⁺u^{n+1} D⁺u^n, conserved exactly
    by the scheme where the source vanishes.

    :return: array of E^{n+1/2} for n = 0 .. steps - 1
    """
    grid = field.grid
    u = field.values
    coefficients = background_coefficients(grid)
    sigma = 1. if coefficients is None else coefficients[0]
    d = grid.dim - 1
    kinetic = 0.5 * np.sum((sigma * ((u[1:] - u[:-1]) / grid.k) ** 2).reshape(grid.steps, -1), axis=1)
    potential = np.zeros(grid.steps)
    for axis in range(d):
        gradient = np.diff(u, axis=axis + 1) / grid.h
        kappa = 1. if coefficients is None else coefficients[1][axis]
        potential += 0.5 * np.sum((kappa * gradient[1:] * gradient[:-1]).reshape(grid.steps, -1), axis=1)
    return (kinetic + potential) * grid.h ** d


def dalembert_oracle(profile, t, x, t0=0., nodes=64):
    """
    Closed-form solution of □u = h in flat 1+1 dimensions for a Gaussian bump h with zero data at t0:
    u(t, x) = -½ ∫∫ h over the backward characteristic triangle. The spatial integral is taken with erf,
    the time integral with Gauss-Legendre quadrature over the source's time support.
    """
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    tc, xc = profile.center
    width = profile.width
    lower = np.maximum(t0, tc - profile.radius)
    span = np.maximum(np.minimum(t, tc + profile.radius) - lower, 0.)
    z, weights = leggauss(nodes)
    s = lower[..., None] + 0.5 * (z + 1.) * span[..., None]
    reach = t[..., None] - s
    scale = np.sqrt(2.) * width
    inner = width * np.sqrt(0.5 * np.pi) * (erf((x[..., None] + reach - xc) / scale) -
                                           erf((x[..., None] - reach - xc) / scale))
    integrand = profile.amplitude * np.exp(-0.5 * (s - tc) ** 2 / width ** 2) * inner
    return -0.25 * span * np.sum(weights * integrand, axis=-1)


def oracle_field(grid, profile):
    """
    :func:`dalembert_oracle` on every lattice point of a 1+1 grid
    """
    t, x = np.meshgrid(time_axis(grid), spatial_axes(grid)[0], indexing='ij')
    return GridField(grid, dalembert_oracle(profile, t, x, grid.t0))
