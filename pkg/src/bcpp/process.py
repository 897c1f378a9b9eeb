"""Exact event-driven simulation of the binary contact path process.

Dynamics on a periodic lattice: every site dies (resets to zero) at rate 1,
absorbs each neighbor's value additively at rate ``lam`` per directed edge,
and in between events every value drifts deterministically by
``exp((1 - 2*lam*d) * elapsed)``.  The drift is the same factor at every
site, so it is stored as a single global exponent and the per-site array
``zeta`` only tracks the jump part; the physical field is
``zeta * exp(drift_exponent + zeta_exponent)``.

Event selection uses the direct (constant total rate) method: the number of
events in a window is Poisson with mean ``n_sites * (1 + 2*d*lam) * dt``,
each event picks a uniform site, is a death with probability
``1 / (1 + 2*d*lam)`` and otherwise adds a uniform neighbor's value.
"""

import numpy as np

from . import _loops
from .errors import ConfigurationError
from .lattice import TorusGeometry


class ScaledField:
    """Per-site nonnegative values plus global drift/rescaling exponents."""

    def __init__(self, zeta, drift_rate, micro_time=0.0, zeta_exponent=0.0):
        # own copy: the event loop mutates in place
        self.zeta = np.array(zeta, dtype=np.float64, copy=True)
        if np.any(self.zeta < 0) or not np.all(np.isfinite(self.zeta)):
            raise ConfigurationError("field values must be finite and nonnegative")
        self.drift_rate = float(drift_rate)  # 1 - 2*lam*d
        self.micro_time = float(micro_time)
        self.zeta_exponent = float(zeta_exponent)

    @property
    def drift_exponent(self):
        # maintained exactly: (1 - 2*lam*d) * t, never integrated numerically
        return self.drift_rate * self.micro_time

    def values(self):
        """Physical per-site values zeta * exp(drift + rescale)."""
        return self.zeta * np.exp(self.drift_exponent + self.zeta_exponent)

    def log_scale(self):
        return self.drift_exponent + self.zeta_exponent


class ProcessState:
    """One realization of the process: field, rates, geometry and RNG."""

    def __init__(self, geom: TorusGeometry, lam, zeta0, seed_entropy):
        # lam = 0 is admitted here (pure death + drift, useful as an analytic
        # control); the experiment-level entry points require lam > 0
        if lam < 0:
            raise ConfigurationError(f"infection rate must be nonnegative, got {lam}")
        self.geom = geom
        self.lam = float(lam)
        self.field = ScaledField(zeta0, drift_rate=1.0 - 2.0 * self.lam * geom.d)
        self.total_rate = geom.n_sites * (1.0 + 2.0 * geom.d * self.lam)
        self.p_death = 1.0 / (1.0 + 2.0 * geom.d * self.lam)
        ss = np.random.SeedSequence(seed_entropy)
        count_ss, loop_ss = ss.spawn(2)
        self.count_rng = np.random.Generator(np.random.PCG64(count_ss))
        self.loop_state = _loops.seed_state(loop_ss)
        self.deaths = 0
        self.infections = 0

    def advance(self, dt_micro):
        """Evolve in place over a microscopic time window; returns self."""
        if dt_micro < 0:
            raise ConfigurationError("advance duration must be nonnegative")
        if dt_micro > 0:
            n_events = int(self.count_rng.poisson(self.total_rate * dt_micro))
            deaths, infections, zexp_delta = _loops.run_events(
                self.field.zeta, self.geom.L, self.geom.d, self.p_death, n_events, self.loop_state
            )
            self.deaths += deaths
            self.infections += infections
            self.field.zeta_exponent += zexp_delta
            self.field.micro_time += dt_micro
        return self

    def field_values(self):
        return self.field.values()

    def total_mass(self):
        return float(np.sum(self.field.zeta)) * np.exp(self.field.log_scale())

    def pair_with_empirical_measure(self, G, N):
        """<pi^N, G> = N^-d sum_x eta(x) G(x/N) over the centered torus window."""
        if N < 1:
            raise ConfigurationError("scale N must be >= 1")
        coords = self.geom.all_coords_centered()
        g = G(coords / float(N))
        return float(np.dot(self.field.zeta, g)) * np.exp(self.field.log_scale()) / float(N) ** self.geom.d

    def project_contact(self):
        """Indicator field of infected sites (value > 0)."""
        return (self.field.zeta > 0).astype(np.uint8)


def init_process(geom, lam, profile, N, seed):
    """Seed the process with zeta(x) = rho0(x/N) in centered coordinates."""
    if N < 1:
        raise ConfigurationError("scale N must be >= 1")
    if profile.support_radius * N > geom.half:
        raise ConfigurationError(
            f"profile support radius {profile.support_radius} at scale N={N} exceeds "
            f"the torus half-width {geom.half} (L={geom.L})"
        )
    coords = geom.all_coords_centered()
    zeta0 = profile(coords / float(N))
    return ProcessState(geom, lam, zeta0, seed)
