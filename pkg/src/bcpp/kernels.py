"""Exact transition kernels and random-walk constants.

The continuous-time rate-``lam`` walk on the torus factorizes over
coordinates, so all d-dimensional kernels reduce to one cycle kernel whose
spectral (cosine) form is exact up to floating point.  The discrete-walk
return probability k(x) is computed by solving its harmonic equation on a
large absorbing box, with a Monte Carlo hitting estimate as the independent
cross-check, and the escape probability, critical-rate bound and gap
constant are derived from it.
"""

import functools
import math
from typing import NamedTuple

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import _loops
from .errors import ConfigurationError, NumericError
from .lattice import TorusGeometry

KERNEL_CLAMP = -1e-14


def cycle_kernel(t, L, lam):
    """Transition probabilities of the rate-lam walk on the L-cycle after time t.

    p_t(j) = (1/L) sum_m exp(2*lam*t*(cos(2 pi m / L) - 1)) cos(2 pi m j / L)
    """
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    if L < 3:
        raise ConfigurationError("cycle length must be >= 3")
    if lam <= 0:
        raise ConfigurationError("rate must be positive")
    if t == 0.0:
        p = np.zeros(L)
        p[0] = 1.0
        return p
    m = np.arange(L)
    eig = np.exp(2.0 * lam * t * (np.cos(2.0 * np.pi * m / L) - 1.0))
    j = np.arange(L)
    p = np.cos(2.0 * np.pi * np.outer(j, m) / L) @ eig / L
    if np.any(p < KERNEL_CLAMP):
        raise NumericError(f"cycle kernel has entries below {KERNEL_CLAMP}: min={p.min():.3e}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


class KernelTable:
    """Torus transition kernel at a fixed time, stored as its 1-d factor."""

    def __init__(self, t, lam, geom: TorusGeometry):
        self.t = float(t)
        self.lam = float(lam)
        self.geom = geom
        self.one_dim = cycle_kernel(t, geom.L, lam)

    def prob(self, x, y):
        """p_t(x, y) for site indices x, y: product of per-coordinate factors."""
        g = self.geom
        out = 1.0
        rx, ry = int(x), int(y)
        for _ in range(g.d):
            cx, rx = rx % g.L, rx // g.L
            cy, ry = ry % g.L, ry // g.L
            out *= self.one_dim[(cy - cx) % g.L]
        return out

    def row(self, x):
        """Full kernel row from site x, as an array over site indices."""
        g = self.geom
        rx = int(x)
        factors = []
        for _ in range(g.d):  # peel coordinates innermost-axis first
            cx, rx = rx % g.L, rx // g.L
            factors.append(np.roll(self.one_dim, cx))
        out = factors[0]
        for f in factors[1:]:  # row-major: earlier axes vary slowest
            out = np.kron(f, out)
        return out


def torus_kernel(t, x, y, geom, lam):
    """Single transition probability p_t(x, y) on the torus."""
    return KernelTable(t, lam, geom).prob(x, y)


def first_moment(initial_field, t, lam, geom):
    """E eta_t(x) = sum_y p_t(x,y) eta_0(y), by d sequential 1-d convolutions."""
    field = np.asarray(initial_field, dtype=np.float64)
    if field.size != geom.n_sites:
        raise ConfigurationError("initial field size does not match geometry")
    if np.any(field < 0) or not np.all(np.isfinite(field)):
        raise ConfigurationError("initial field must be finite and nonnegative")
    p = cycle_kernel(t, geom.L, lam)
    idx = np.arange(geom.L)
    circ = p[(idx[:, None] - idx[None, :]) % geom.L]
    out = field.reshape((geom.L,) * geom.d)
    for axis in range(geom.d):
        out = np.moveaxis(np.tensordot(circ, out, axes=([1], [axis])), 0, axis)
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# return probability k(x) of the discrete simple random walk


def _cube_neighbor_indices(R, d):
    """Neighbor indices within the centered cube of l-inf radius R; -1 outside."""
    S = 2 * R + 1
    n = S**d
    idx = np.arange(n)
    nbr = np.full((n, 2 * d), -1, dtype=np.int64)
    for k in range(d):
        stride = S ** (d - 1 - k)
        c = (idx // stride) % S
        up = idx + stride
        nbr[:, 2 * k] = np.where(c + 1 < S, up, -1)
        dn = idx - stride
        nbr[:, 2 * k + 1] = np.where(c > 0, dn, -1)
    return nbr


def _origin_index(R, d):
    S = 2 * R + 1
    return sum(R * S ** (d - 1 - k) for k in range(d))


@functools.lru_cache(maxsize=6)
def solve_return_probabilities(d, R_solve, tol=1e-13):
    """k(x) on the centered cube of radius R_solve.

    Solves k(x) = (1/2d) sum_{y~x} k(y) for x != O with k(O) = 1 and k = 0
    outside the cube (absorbing boundary, so the result underestimates the
    whole-lattice value).  Returns a read-only flat array over the cube.
    """
    if R_solve < 2:
        raise ConfigurationError("solve radius must be >= 2")
    S = 2 * R_solve + 1
    n = S**d
    o = _origin_index(R_solve, d)
    nbr = _cube_neighbor_indices(R_solve, d)

    # unknowns: all cube sites except the origin
    unk = np.ones(n, dtype=bool)
    unk[o] = False
    col_of = np.cumsum(unk) - 1  # cube index -> unknown column

    rows, cols, vals = [], [], []
    b = np.zeros(n - 1)
    r_idx = col_of[np.arange(n)[unk]]
    rows.append(r_idx)
    cols.append(r_idx)
    vals.append(np.ones(n - 1))
    w = 1.0 / (2 * d)
    for j in range(2 * d):
        y = nbr[unk, j]
        ok = y >= 0
        is_o = ok & (y == o)
        b[r_idx[is_o]] += w
        use = ok & (y != o)
        rows.append(r_idx[use])
        cols.append(col_of[y[use]])
        vals.append(np.full(use.sum(), -w))
    A = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n - 1, n - 1),
    )

    x = _solve_spd(A, b, tol)
    k = np.zeros(n)
    k[unk] = x
    k[o] = 1.0
    k.flags.writeable = False  # shared via the cache
    return k


def _solve_spd(A, b, tol):
    try:
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(A.tocsr())
        x = ml.solve(b, tol=tol, accel="cg", maxiter=400)
    except ImportError:
        x, info = scipy.sparse.linalg.cg(A, b, rtol=tol, atol=0.0, maxiter=20000)
        if info != 0:
            raise NumericError(f"conjugate gradient did not converge (info={info})")
    res = np.linalg.norm(A @ x - b, ord=np.inf)
    if res > 1e-10:
        raise NumericError(f"harmonic solve residual too large: {res:.3e}")
    return x


class ReturnTable(NamedTuple):
    """k(x) over the centered cube of l-inf radius ``radius``."""

    d: int
    radius: int
    values: np.ndarray  # shape (2*radius+1,) * d
    method: str
    ci_halfwidth: np.ndarray | None  # same shape, Monte Carlo only

    def k(self, coord):
        coord = np.atleast_1d(np.asarray(coord, dtype=np.int64))
        if np.any(np.abs(coord) > self.radius):
            raise ConfigurationError(f"coordinate {coord} outside table radius {self.radius}")
        return float(self.values[tuple(c + self.radius for c in coord)])

    @property
    def k_e1(self):
        e1 = np.zeros(self.d, dtype=np.int64)
        e1[0] = 1
        return self.k(e1)


def return_table(d, R, method="linear_solve", R_solve=40, n_walks=100_000,
                 escape_radius=None, max_steps=50_000_000, seed=0):
    """Table of return probabilities k(x) for |x|_inf <= R.

    linear_solve: absorbing-box harmonic solve at radius ``R_solve`` (> R).
    monte_carlo:  per-entry fraction of walks hitting the origin before
                  leaving the l-inf ball of ``escape_radius``, with a
                  binomial 95% CI half-width.
    """
    if R < 1:
        raise ConfigurationError("table radius must be >= 1")
    S = 2 * R + 1
    if method == "linear_solve":
        if R_solve <= R:
            raise ConfigurationError(f"R_solve={R_solve} must exceed table radius R={R}")
        full = solve_return_probabilities(d, R_solve)
        cube = full.reshape((2 * R_solve + 1,) * d)
        sl = tuple(slice(R_solve - R, R_solve + R + 1) for _ in range(d))
        return ReturnTable(d, R, cube[sl].copy(), "linear_solve", None)
    if method == "monte_carlo":
        if escape_radius is None:
            escape_radius = R_solve
        values = np.zeros((S,) * d)
        ci = np.zeros((S,) * d)
        ss = np.random.SeedSequence([int(seed), d, R])
        children = ss.spawn(S**d)
        for flat, coord in enumerate(np.ndindex(*values.shape)):
            x = np.array(coord, dtype=np.int64) - R
            if not x.any():
                values[coord] = 1.0  # k(O) = 1 by definition
                continue
            state = _loops.seed_state(children[flat])
            hits = _loops.walk_hit_count(d, x, escape_radius, max_steps, n_walks, state)
            p = hits / n_walks
            values[coord] = p
            ci[coord] = 1.96 * math.sqrt(max(p * (1 - p), 1e-12) / n_walks)
        return ReturnTable(d, R, values, "monte_carlo", ci)
    raise ConfigurationError(f"unknown return-table method {method!r}")


def mc_hit_probability(d, coord, escape_radius, n_walks, seed, max_steps=50_000_000):
    """Monte Carlo estimate (p_hat, se) of hitting O before escaping the box."""
    x = np.asarray(coord, dtype=np.int64)
    if not x.any():
        return 1.0, 0.0
    state = _loops.seed_state([int(seed), d, int(escape_radius), int(n_walks)])
    hits = _loops.walk_hit_count(d, x, escape_radius, max_steps, n_walks, state)
    p = hits / n_walks
    return p, math.sqrt(max(p * (1 - p), 0.0) / n_walks)


def gamma_d(table: ReturnTable):
    """Escape probability gamma = 1 - k(e1)."""
    return 1.0 - table.k_e1


class GammaEstimate(NamedTuple):
    gamma: float
    k_e1: float
    k_by_radius: dict
    delta: float  # |k difference| between the two solve radii


@functools.lru_cache(maxsize=8)
def _k_e1_at_radius(d, R_solve):
    full = solve_return_probabilities(d, R_solve)
    cube = full.reshape((2 * R_solve + 1,) * d)
    idx = [R_solve] * d
    idx[0] += 1
    return float(cube[tuple(idx)])


def gamma_reference(d=3, radii=(30, 40)):
    """Best derived escape probability: Richardson extrapolation in 1/R.

    Absorbing-box solves underestimate k by O(1/R); pairing two radii
    removes that leading term.
    """
    r1, r2 = sorted(radii)
    k1 = _k_e1_at_radius(d, r1)
    k2 = _k_e1_at_radius(d, r2)
    # k_R = k - c/R  =>  k = k2 + (k2 - k1) * (1/r2) / (1/r1 - 1/r2)
    k = k2 + (k2 - k1) * (1.0 / r2) / (1.0 / r1 - 1.0 / r2)
    return GammaEstimate(1.0 - k, k, {r1: k1, r2: k2}, abs(k2 - k1))


class HLambda(NamedTuple):
    value: float
    positive: bool


def h_lambda(lam, d, gamma):
    """Gap constant h = (2*lam*d*(2*gamma - 1) - 1) / (1 + 2*d*lam).

    Positive exactly when lam exceeds the critical-rate bound; below it the
    (nonpositive) value is still returned, flagged.
    """
    if gamma <= 0.5:
        raise ConfigurationError(f"escape probability must exceed 1/2, got {gamma}")
    h = (2.0 * lam * d * (2.0 * gamma - 1.0) - 1.0) / (1.0 + 2.0 * d * lam)
    return HLambda(h, h > 0.0)


def lambda_critical_bound(d, gamma):
    """Upper bound 1 / (2d(2*gamma - 1)) for the contact-process critical rate."""
    if gamma <= 0.5:
        raise ConfigurationError(f"escape probability must exceed 1/2, got {gamma}")
    return 1.0 / (2.0 * d * (2.0 * gamma - 1.0))
