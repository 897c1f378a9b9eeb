"""Second-moment machinery: pair operators, their exponential action, and
the positivity / bound checks built on them.

The pair operator acts on functions of ordered site pairs (x, y): rows for
x = y carry the variance dynamics (which gain a +1 growth term and couple
into neighboring diagonal pairs at rate ``lam``), rows for x != y are the
generator of two independent walks.  The independent-pair Q-matrix is the
same operator without the diagonal-pair corrections, which makes their
entrywise difference explicit.

Exponential actions use uniformization: shift by the largest diagonal
magnitude so the series has only nonnegative terms, then sum the scaled
power series with a certified tail bound.
"""

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import ConfigurationError, NumericError
from .lattice import TorusGeometry

PAIR_STATE_GUARD = 4096
DENSE_GUARD = 64


class PairGenerator:
    """Sparse operator on ordered site pairs of a torus."""

    def __init__(self, kind, lam, geom, matrix, shift):
        self.kind = kind
        self.lam = float(lam)
        self.geom = geom
        self.matrix = matrix  # CSR, shape (n^2, n^2)
        self.shift = float(shift)  # uniformization shift 4*lam*d

    @property
    def n_pairs(self):
        return self.matrix.shape[0]


def _independent_pair_entries(lam, geom):
    """COO entries of the independent-two-walk Q-matrix C."""
    n = geom.n_sites
    nbr = geom.neighbor_table()
    X = np.repeat(np.arange(n), n)
    Y = np.tile(np.arange(n), n)
    rows_d = X * n + Y
    rows, cols, vals = [rows_d], [rows_d], [np.full(n * n, -4.0 * lam * geom.d)]
    for j in range(2 * geom.d):
        u = nbr[X, j]
        rows.append(rows_d)
        cols.append(u * n + Y)
        vals.append(np.full(n * n, lam))
        v = nbr[Y, j]
        rows.append(rows_d)
        cols.append(X * n + v)
        vals.append(np.full(n * n, lam))
    return rows, cols, vals


def _diagonal_pair_corrections(lam, geom):
    """COO entries of M - C: +1 on diagonal-pair diagonals, +lam into (u,u)."""
    n = geom.n_sites
    nbr = geom.neighbor_table()
    x = np.arange(n)
    rows_dd = x * n + x
    rows, cols, vals = [rows_dd], [rows_dd], [np.ones(n)]
    for j in range(2 * geom.d):
        u = nbr[x, j]
        rows.append(rows_dd)
        cols.append(u * n + u)
        vals.append(np.full(n, lam))
    return rows, cols, vals


def build_pair_generator(lam, geom: TorusGeometry, kind):
    """Construct the pair-moment operator (kind='M_lambda') or the
    independent-pair Q-matrix (kind='C_lambda') on the torus."""
    if lam <= 0:
        raise ConfigurationError("rate must be positive")
    if geom.n_sites > PAIR_STATE_GUARD:
        raise ConfigurationError(
            f"pair operator needs (L^d)^2 states; L^d={geom.n_sites} exceeds the "
            f"budget guard {PAIR_STATE_GUARD}"
        )
    if kind not in ("M_lambda", "C_lambda"):
        raise ConfigurationError(f"unknown pair-generator kind {kind!r}")
    rows, cols, vals = _independent_pair_entries(lam, geom)
    if kind == "M_lambda":
        r2, c2, v2 = _diagonal_pair_corrections(lam, geom)
        rows += r2
        cols += c2
        vals += v2
    n2 = geom.n_sites**2
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n2, n2),
    ).tocsr()
    return PairGenerator(kind, lam, geom, mat, shift=4.0 * lam * geom.d)


def expm_action(matrix, shift, t, v, rtol=1e-12):
    """exp(t * matrix) @ v by uniformization.

    ``matrix + shift*I`` must be entrywise nonnegative; the power series of
    the shifted operator then has no cancellation and the Poisson-style tail
    is a rigorous truncation bound.  Splits large t*||B|| into substeps to
    keep the scaling factor representable.
    """
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    if t == 0.0:
        return v.copy()
    B = matrix.copy().tolil()
    B.setdiag(matrix.diagonal() + shift)
    B = B.tocsr()
    norm_b = np.abs(B).sum(axis=1).max()
    n_steps = max(1, int(np.ceil(t * norm_b / 200.0)))
    dt = t / n_steps
    out = v.copy()
    for _ in range(n_steps):
        out = _expm_action_step(B, shift, dt, norm_b, out, rtol)
    return out


def _expm_action_step(B, shift, t, norm_b, v, rtol):
    acc = v.copy()
    term = v.copy()
    tb = t * norm_b
    max_terms = int(tb + 40.0 * np.sqrt(tb + 1.0) + 120.0)
    for k in range(1, max_terms + 1):
        term = B @ term * (t / k)
        acc += term
        if k > tb:
            q = tb / (k + 1)
            tail = np.abs(term).sum() * q / (1.0 - q)
            if tail <= rtol * max(np.abs(acc).sum(), 1e-300):
                return acc * np.exp(-shift * t)
    raise NumericError(
        f"uniformization did not converge: t*||B||={tb:.3g}, {max_terms} terms, rtol={rtol}"
    )


def evolve_pair_moments(gamma0, t, gen: PairGenerator, rtol=1e-12):
    """Gamma_t = exp(t * gen) Gamma_0; accepts and returns (n, n) or flat."""
    g0 = np.asarray(gamma0, dtype=np.float64)
    shape = g0.shape
    flat = expm_action(gen.matrix, gen.shift, t, g0.reshape(-1), rtol)
    return flat.reshape(shape)


# ---------------------------------------------------------------------------
# the difference-lattice operator for the all-ones second moment


class PsiOperator:
    """Truncated operator on the centered cube of Z^d.

    ``matrix`` drops couplings to sites outside the cube; ``boundary_inflow``
    records the dropped rate mass per row (2*lam per missing neighbor), which
    lets the evolution pin the exterior to a constant instead of zero.
    """

    def __init__(self, lam, R, d, matrix, boundary_inflow):
        self.lam = float(lam)
        self.R = int(R)
        self.d = int(d)
        self.matrix = matrix
        self.boundary_inflow = boundary_inflow
        self.shift = 4.0 * lam * d

    @property
    def side(self):
        return 2 * self.R + 1

    def origin_flat(self):
        return sum(self.R * self.side ** (self.d - 1 - k) for k in range(self.d))

    def e1_flat(self):
        return self.origin_flat() + self.side ** (self.d - 1)


def build_psi(lam, R, d=3):
    """Difference-lattice generator: rows x != O jump to neighbors at rate
    2*lam; the origin row has diagonal (1 - 2*lam*d) and rate 4*lam*d
    into e1 (the symmetry-reduced coupling into the first shell)."""
    if lam <= 0:
        raise ConfigurationError("rate must be positive")
    if R < 2:
        raise ConfigurationError("truncation radius must be >= 2")
    S = 2 * R + 1
    n = S**d
    idx = np.arange(n)
    o = sum(R * S ** (d - 1 - k) for k in range(d))
    rows, cols, vals = [], [], []
    not_o = idx != o
    rows.append(idx[not_o])
    cols.append(idx[not_o])
    vals.append(np.full(n - 1, -4.0 * lam * d))
    inflow = np.zeros(n)
    for k in range(d):
        stride = S ** (d - 1 - k)
        c = (idx // stride) % S
        for sgn in (1, -1):
            y = idx + sgn * stride
            ok = not_o & ((c + 1 < S) if sgn == 1 else (c > 0))
            rows.append(idx[ok])
            cols.append(y[ok])
            vals.append(np.full(ok.sum(), 2.0 * lam))
            inflow[not_o & ~ok] += 2.0 * lam
    rows.append(np.array([o, o]))
    cols.append(np.array([o, o + S ** (d - 1)]))
    vals.append(np.array([1.0 - 2.0 * lam * d, 4.0 * lam * d]))
    mat = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return PsiOperator(lam, R, d, mat, inflow)


def evolve_J(t, lam, R, d=3, rtol=1e-12):
    """Second-moment function J_t of the all-ones start, as a cube array.

    Solves dJ/dt = Psi J on the truncated cube with the exterior held at the
    far-field value 1 (distant sites stay uncorrelated with second moment
    one, and J_t >= 1 everywhere, so the pinning still underestimates the
    whole-lattice values; the error shrinks rapidly with R).  The constant
    exterior enters as an affine term, handled by augmenting the operator
    with one constant slot so a single exponential action solves the system.
    """
    psi = build_psi(lam, R, d)
    n = psi.matrix.shape[0]
    aug = scipy.sparse.bmat(
        [[psi.matrix, psi.boundary_inflow.reshape(-1, 1)], [None, scipy.sparse.csr_matrix((1, 1))]],
        format="csr",
    )
    v = np.ones(n + 1)
    out = expm_action(aug, psi.shift, t, v, rtol)
    return out[:n].reshape((psi.side,) * d)


def psi_null_residual(lam, R, d, k_cube, h):
    """max |(Psi Lambda)(x)| over interior x, with Lambda = k + h.

    ``k_cube`` holds return probabilities on the same cube as the operator;
    interior means all neighbors inside, so truncation does not contribute.
    """
    psi = build_psi(lam, R, d)
    S = psi.side
    k_cube = np.asarray(k_cube, dtype=np.float64)
    if k_cube.shape != (S,) * d:
        raise ConfigurationError(f"k table shape {k_cube.shape} does not match cube side {S}")
    lam_vec = (k_cube + h).reshape(-1)
    resid = (psi.matrix @ lam_vec).reshape((S,) * d)
    interior = tuple(slice(1, S - 1) for _ in range(d))
    return float(np.abs(resid[interior]).max())


def check_eq23_positivity(t, lam, geom: TorusGeometry):
    """Minimum entry of exp(t M) - exp(t C), via dense matrix exponentials."""
    if geom.n_sites > DENSE_GUARD:
        raise ConfigurationError(
            f"dense positivity check limited to L^d <= {DENSE_GUARD}, got {geom.n_sites}"
        )
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    M = build_pair_generator(lam, geom, "M_lambda").matrix.toarray()
    C = build_pair_generator(lam, geom, "C_lambda").matrix.toarray()
    diff = scipy.linalg.expm(t * M) - scipy.linalg.expm(t * C)
    return float(diff.min())


def second_moment_bound_factor(lam, d, gamma):
    """Uniform second-moment bound factor (k(O) + h) / h = (1 + h) / h.

    Multiplied by the squared sup of the initial profile it dominates
    E[eta_t(x)^2] at all times; only meaningful above the critical bound.
    """
    from .kernels import h_lambda

    h = h_lambda(lam, d, gamma)
    if h.value <= 0:
        raise ConfigurationError(
            f"second-moment bound needs h > 0; got h={h.value:.4g} at lam={lam}"
        )
    return (1.0 + h.value) / h.value
