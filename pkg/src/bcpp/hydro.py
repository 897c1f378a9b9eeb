"""Diffusive-scaling experiments: empirical-measure pairings against the
heat-equation target, variance decay, mass conservation and the Dynkin
martingale diagnostics.

Time scaling runs the unit-rate process to microscopic time t*N^2 (a version
of the accelerated-generator process).  All randomness is derived from
(master_seed, N, t-index, replica-index), replicas are aggregated in index
order, and cells can be farmed out to a fork-based worker pool without
changing any output.
"""

import dataclasses
import multiprocessing
import os

import numpy as np

from . import _loops, pde
from .errors import ConfigurationError
from .lattice import TorusGeometry
from .profiles import DensityProfile, TestFunction


@dataclasses.dataclass
class ExperimentConfig:
    d: int = 3
    lam: float = 0.6
    profile: DensityProfile = None
    test_fn: TestFunction = None
    N_list: tuple = (4, 8)
    t_list: tuple = (0.05,)
    replicas: int = 200
    c_L: int = 8
    master_seed: int = 20240801
    output: str = "hydro.csv"
    workers: int = 0  # 0 -> use all cores

    def __post_init__(self):
        if self.profile is None:
            self.profile = DensityProfile("gaussian_bump", self.d)
        if self.test_fn is None:
            self.test_fn = TestFunction("cosine_bump", self.d)
        self.N_list = tuple(int(n) for n in self.N_list)
        self.t_list = tuple(float(t) for t in self.t_list)
        self.validate()

    def validate(self):
        if self.lam <= 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if any(n < 1 for n in self.N_list) or not self.N_list:
            raise ConfigurationError(f"N_list entries must be >= 1, got {self.N_list}")
        if any(t < 0 for t in self.t_list) or not self.t_list:
            raise ConfigurationError(f"t_list entries must be >= 0, got {self.t_list}")
        if self.replicas < 2:
            raise ConfigurationError("at least 2 replicas are required")
        if self.c_L < 1:
            raise ConfigurationError("c_L must be a positive integer")
        for n in self.N_list:
            if self.c_L * n < 3:
                raise ConfigurationError(
                    f"L = c_L*N = {self.c_L * n} violates the L >= 3 rule (N={n}, c_L={self.c_L})"
                )
        if self.profile.d != self.d or self.test_fn.d != self.d:
            raise ConfigurationError("profile/test-function dimension mismatch")
        max_support = max(self.profile.support_radius, self.test_fn.support_radius)
        if max_support > self.c_L / 2.0:
            raise ConfigurationError(
                f"support radius {max_support} does not fit in half the torus (c_L={self.c_L})"
            )

    def L_of(self, N):
        return self.c_L * N


@dataclasses.dataclass
class ReportRow:
    N: int
    t: float
    replicas: int
    mean_pairing: float
    variance: float
    target: float
    abs_error: float
    se: float


@dataclasses.dataclass
class MartingaleRow:
    N: int
    t: float
    replicas: int
    mart_mean: float
    mart_var: float
    predicted_qv: float
    z_mean: float


def discrete_laplacian(G, N, x):
    """Delta_N G(x/N) = N^2 sum over lattice neighbors [G(y/N) - G(x/N)]."""
    x = np.asarray(x, dtype=np.int64)
    d = x.shape[0]
    acc = -2.0 * d * G(x / float(N))
    for k in range(d):
        for sgn in (1, -1):
            y = x.copy()
            y[k] += sgn
            acc += G(y / float(N))
    return float(N) ** 2 * acc


class _Cell:
    """Shared per-(N, t) simulation context, inherited by forked workers."""

    def __init__(self, cfg, N, t_index):
        self.N = N
        self.t = cfg.t_list[t_index]
        self.t_index = t_index
        self.lam = cfg.lam
        self.master_seed = cfg.master_seed
        geom = TorusGeometry(cfg.d, cfg.L_of(N))
        self.geom = geom
        if cfg.profile.support_radius * N > geom.half:
            raise ConfigurationError(
                f"profile support does not fit torus at N={N}, L={geom.L}"
            )
        coords = geom.all_coords_centered()
        u = coords / float(N)
        self.zeta0 = cfg.profile(u)
        g = cfg.test_fn(u)
        nbr = geom.neighbor_table()
        lap = -2.0 * geom.d * g
        w2 = g * g
        for j in range(2 * geom.d):
            gn = g[nbr[:, j]]
            lap += gn
            w2 += self.lam * gn * gn
        self.g = g
        self.wlap = float(N) ** 2 * lap
        self.w2 = w2
        self.in_supp = ((self.wlap != 0.0) | (self.w2 != 0.0)).astype(np.uint8)
        self.a = 1.0 - 2.0 * self.lam * geom.d
        self.total_rate = geom.n_sites * (1.0 + 2.0 * geom.d * self.lam)
        self.p_death = 1.0 / (1.0 + 2.0 * geom.d * self.lam)
        self.duration = self.t * N**2
        self.pairing0 = float(np.dot(self.zeta0, g)) / float(N) ** geom.d
        self.mass0 = float(np.sum(self.zeta0))

    def replica_seed(self, r):
        return [self.master_seed, self.N, self.t_index, r]


_CELL = None


def _replica_plain(r):
    c = _CELL
    ss = np.random.SeedSequence(c.replica_seed(r))
    count_ss, loop_ss = ss.spawn(2)
    n_events = int(np.random.Generator(np.random.PCG64(count_ss)).poisson(c.total_rate * c.duration))
    zeta = c.zeta0.copy()
    state = _loops.seed_state(loop_ss)
    _, _, zexp = _loops.run_events(zeta, c.geom.L, c.geom.d, c.p_death, n_events, state)
    log_scale = c.a * c.duration + zexp
    pairing = float(np.dot(zeta, c.g)) * np.exp(log_scale) / float(c.N) ** c.geom.d
    mass = float(np.sum(zeta)) * np.exp(log_scale)
    return pairing, mass


def _replica_tracked(r):
    c = _CELL
    ss = np.random.SeedSequence(c.replica_seed(r))
    _, loop_ss = ss.spawn(2)
    zeta = c.zeta0.copy()
    state = _loops.seed_state(loop_ss)
    _, _, zexp, i1, i2 = _loops.run_events_tracked(
        zeta, c.geom.L, c.geom.d, c.p_death, c.total_rate, c.duration,
        c.a, c.wlap, c.w2, c.in_supp, state,
    )
    log_scale = c.a * c.duration + zexp
    pairing = float(np.dot(zeta, c.g)) * np.exp(log_scale) / float(c.N) ** c.geom.d
    d = c.geom.d
    compensator = c.lam / float(c.N) ** (d + 2) * i1
    qv = i2 / float(c.N) ** (2 * d)
    mart = pairing - c.pairing0 - compensator
    return mart, qv, pairing


def _warm_kernels():
    z = np.array([1.0, 0.0, 0.5])
    s = np.array([1, 2, 3, 4], dtype=np.uint64)
    _loops.run_events(z.copy(), 3, 1, 0.5, 2, s.copy())
    w = np.zeros(3)
    m = np.zeros(3, dtype=np.uint8)
    _loops.run_events_tracked(z.copy(), 3, 1, 0.5, 6.0, 0.02, -0.2, w, w, m, s.copy())
    _loops.walk_hit_count(1, np.array([1], dtype=np.int64), 4, 100, 5, s.copy())


def resolve_workers(requested):
    if requested and requested > 0:
        return requested
    env = os.environ.get("BCPP_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_replicas(fn, cell, n_replicas, workers):
    """Run replicas 0..n-1 and return results in replica order."""
    global _CELL
    _CELL = cell
    workers = min(resolve_workers(workers), n_replicas)
    try:
        if workers <= 1 or multiprocessing.get_start_method(allow_none=True) not in (None, "fork"):
            return [fn(r) for r in range(n_replicas)]
        _warm_kernels()  # compile in the parent so forked children reuse it
        ctx = multiprocessing.get_context("fork")
        chunk = max(1, n_replicas // (workers * 8))
        with ctx.Pool(workers) as pool:
            return pool.map(fn, range(n_replicas), chunksize=chunk)
    finally:
        _CELL = None


def run_convergence_experiment(cfg: ExperimentConfig):
    """Mean empirical pairing per (N, t) against the heat-equation target."""
    rows = []
    targets = {
        t: pde.integrate_against(cfg.profile, cfg.test_fn, t, cfg.lam)
        for t in cfg.t_list
    }
    for N in cfg.N_list:
        for ti, t in enumerate(cfg.t_list):
            cell = _Cell(cfg, N, ti)
            if t == 0.0:
                mean, var = cell.pairing0, 0.0
            else:
                res = _map_replicas(_replica_plain, cell, cfg.replicas, cfg.workers)
                pairings = np.array([p for p, _ in res])
                mean = float(pairings.mean())
                var = float(pairings.var(ddof=1))
            se = float(np.sqrt(var / cfg.replicas))
            rows.append(ReportRow(N, t, cfg.replicas, mean, var, targets[t],
                                  abs(mean - targets[t]), se))
    return rows


def variance_sweep(cfg: ExperimentConfig):
    """Sample variance of the pairing per (N, t) with a chi-square 95% CI."""
    from scipy.stats import chi2

    rows = []
    n = cfg.replicas
    for N in cfg.N_list:
        for ti, t in enumerate(cfg.t_list):
            cell = _Cell(cfg, N, ti)
            if t == 0.0:
                rows.append((N, t, n, 0.0, 0.0, 0.0))
                continue
            res = _map_replicas(_replica_plain, cell, n, cfg.workers)
            pairings = np.array([p for p, _ in res])
            var = float(pairings.var(ddof=1))
            lo = (n - 1) * var / float(chi2.ppf(0.975, n - 1))
            hi = (n - 1) * var / float(chi2.ppf(0.025, n - 1))
            rows.append((N, t, n, var, lo, hi))
    return rows


def martingale_diagnostics(cfg: ExperimentConfig):
    """Dynkin martingale summary per (N, t).

    Per replica the compensator and the quadratic-variation integrand are
    integrated exactly along the path (closed-form exponential segments);
    the reported z-score tests the zero-mean property.
    """
    rows = []
    for N in cfg.N_list:
        for ti, t in enumerate(cfg.t_list):
            if t == 0.0:
                rows.append(MartingaleRow(N, t, cfg.replicas, 0.0, 0.0, 0.0, 0.0))
                continue
            cell = _Cell(cfg, N, ti)
            res = _map_replicas(_replica_tracked, cell, cfg.replicas, cfg.workers)
            marts = np.array([m for m, _, _ in res])
            qvs = np.array([q for _, q, _ in res])
            mean = float(marts.mean())
            var = float(marts.var(ddof=1))
            se = np.sqrt(var / cfg.replicas)
            z = mean / se if se > 0 else 0.0
            rows.append(MartingaleRow(N, t, cfg.replicas, mean, var, float(qvs.mean()), float(z)))
    return rows


def mass_conservation_check(cfg: ExperimentConfig):
    """Replica-mean total mass against the (conserved-in-expectation) start."""
    rows = []
    for N in cfg.N_list:
        for ti, t in enumerate(cfg.t_list):
            cell = _Cell(cfg, N, ti)
            if t == 0.0:
                rows.append((N, t, cfg.replicas, cell.mass0, cell.mass0, 0.0))
                continue
            res = _map_replicas(_replica_plain, cell, cfg.replicas, cfg.workers)
            masses = np.array([m for _, m in res])
            mean = float(masses.mean())
            se = float(masses.std(ddof=1) / np.sqrt(cfg.replicas))
            z = (mean - cell.mass0) / se if se > 0 else 0.0
            rows.append((N, t, cfg.replicas, mean, cell.mass0, float(z)))
    return rows
