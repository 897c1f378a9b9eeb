"""Limiting heat-equation density and its verification oracles.

The limit density solves d rho/dt = lam * Laplacian(rho) with rho(0) = rho0
and has the Gaussian-convolution form

    rho(t, u) = integral (2 pi t)^{-d/2} exp(-|x|^2 / 2t) rho0(sqrt(2 lam) x + u) dx,

evaluated here with Gauss-Hermite product quadrature (the Gaussian weight is
absorbed exactly).  An explicit finite-difference solve on a zero-flux box
serves as the independent oracle, and the time-integrated weak-form residual
checks both against the defining identity with the lam * Laplacian(G) term.
"""

import numpy as np

from .errors import ConfigurationError


def _gh_nodes(order, d):
    """Product Gauss-Hermite rule normalized for the standard Gaussian."""
    y, w = np.polynomial.hermite.hermgauss(order)
    w = w / np.sqrt(np.pi)
    nodes = np.stack(np.meshgrid(*([y] * d), indexing="ij"), axis=-1).reshape(-1, d)
    weights = w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, w).reshape(-1)
    return nodes, weights


def heat_solution(profile, t, u, lam, order=24):
    """rho(t, u) for one point or an (n, d) array of points."""
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    if order < 8:
        raise ConfigurationError("quadrature order must be at least 8")
    d = profile.d
    pts = np.atleast_2d(np.asarray(u, dtype=np.float64))
    scalar = np.asarray(u).ndim <= 1
    if t == 0.0:
        vals = profile(pts)
        vals = np.atleast_1d(vals)
        return float(vals[0]) if scalar else vals
    nodes, weights = _gh_nodes(order, d)
    disp = nodes * (2.0 * np.sqrt(lam * t))  # sqrt(2 lam) * sqrt(2 t) * y
    out = np.empty(pts.shape[0])
    chunk = max(1, int(2_000_000 // max(len(nodes), 1)))
    for lo in range(0, pts.shape[0], chunk):
        block = pts[lo : lo + chunk]
        args = block[:, None, :] + disp[None, :, :]
        vals = profile(args.reshape(-1, d)).reshape(block.shape[0], len(nodes))
        out[lo : lo + chunk] = vals @ weights
    return float(out[0]) if scalar else out


class FdSolution:
    """Gridded finite-difference solution with its axes."""

    def __init__(self, axes, values, t, grid_step):
        self.axes = axes
        self.values = values
        self.t = t
        self.grid_step = grid_step

    def points(self):
        d = len(self.axes)
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, d)


def fd_heat_solver(profile, t, lam, grid_step, box_half):
    """Explicit-Euler heat solve on [-box_half, box_half]^d with zero-flux walls.

    The time step obeys dt <= grid_step^2 / (4 lam d); the box must leave
    room for the initial support plus the diffusive spread.
    """
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    d = profile.d
    needed = profile.support_radius + 3.0 * np.sqrt(2.0 * lam * t)
    if box_half < needed:
        raise ConfigurationError(
            f"box half-width {box_half} too small: need >= {needed:.3f} "
            "(support plus diffusive spread)"
        )
    m = int(np.ceil(box_half / grid_step))
    ax = np.arange(-m, m + 1) * grid_step
    axes = [ax] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    rho = profile(pts).reshape((len(ax),) * d)
    if t == 0.0:
        return FdSolution(axes, rho, t, grid_step)
    dt_max = grid_step**2 / (4.0 * lam * d)
    n_steps = max(1, int(np.ceil(t / dt_max)))
    dt = t / n_steps
    c = lam * dt / grid_step**2
    for _ in range(n_steps):
        lap = np.zeros_like(rho)
        for axis in range(d):
            r = np.moveaxis(rho, axis, 0)
            l2 = np.moveaxis(lap, axis, 0)
            l2[:-1] += r[1:] - r[:-1]  # flux from the +side neighbor
            l2[1:] += r[:-1] - r[1:]  # flux from the -side neighbor
        rho = rho + c * lap
    return FdSolution(axes, rho, t, grid_step)


def _gl_nodes(radius, order, d):
    """Product Gauss-Legendre rule on the cube [-radius, radius]^d."""
    y, w = np.polynomial.legendre.leggauss(order)
    y = y * radius
    w = w * radius
    nodes = np.stack(np.meshgrid(*([y] * d), indexing="ij"), axis=-1).reshape(-1, d)
    weights = w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, w).reshape(-1)
    return nodes, weights


_SPACE_ORDER = {1: 64, 2: 36, 3: 22}
_GH_ORDER = {1: 48, 2: 28, 3: 18}


def integrate_against(profile, G, t, lam, space_order=None, gh_order=None):
    """integral rho(t, u) G(u) du over the support of G."""
    space_order = space_order or _SPACE_ORDER.get(profile.d, 16)
    gh_order = gh_order or _GH_ORDER.get(profile.d, 12)
    nodes, weights = _gl_nodes(G.support_radius, space_order, profile.d)
    rho = heat_solution(profile, t, nodes, lam, order=gh_order)
    return float(np.dot(weights, rho * G(nodes)))


def weak_residual(profile, G, t, lam, time_steps=33, space_order=None, gh_order=None,
                  time_term_rate=None):
    """Residual of the time-integrated weak identity

        int rho(t)G - int rho0 G - lam int_0^t int rho(s) Lap(G) ds.

    Spatial integrals by Gauss-Legendre over supp(G), time by Simpson.
    ``time_term_rate`` deliberately mis-scales the rate in the time-integral
    term only; it exists to demonstrate the check has power and defaults to
    the true rate.
    """
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    if t == 0.0:
        return 0.0
    d = profile.d
    space_order = space_order or _SPACE_ORDER.get(d, 16)
    gh_order = gh_order or _GH_ORDER.get(d, 12)
    if time_term_rate is None:
        time_term_rate = lam
    nodes, weights = _gl_nodes(G.support_radius, space_order, d)
    g_vals = G(nodes)
    lap_vals = G.laplacian(nodes)
    if time_steps < 3:
        time_steps = 3
    if time_steps % 2 == 0:
        time_steps += 1
    s_grid = np.linspace(0.0, t, time_steps)
    inner = np.empty(time_steps)
    for i, s in enumerate(s_grid):
        rho = heat_solution(profile, s, nodes, lam, order=gh_order)
        inner[i] = np.dot(weights, rho * lap_vals)
    simps_w = np.ones(time_steps)
    simps_w[1:-1:2] = 4.0
    simps_w[2:-1:2] = 2.0
    simps_w *= (s_grid[1] - s_grid[0]) / 3.0
    time_integral = float(np.dot(simps_w, inner))
    term_t = float(np.dot(weights, heat_solution(profile, t, nodes, lam, order=gh_order) * g_vals))
    term_0 = float(np.dot(weights, profile(nodes) * g_vals))
    return term_t - term_0 - time_term_rate * time_integral
