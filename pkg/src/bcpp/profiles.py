"""Initial density profiles and smooth compactly supported test functions.

Profiles play the role of the macroscopic initial datum: the process is
seeded with ``zeta(x) = rho0(x / N)`` in centered lattice coordinates.
Test functions pair with the empirical measure and need an analytically
evaluable Laplacian, so only shapes with closed-form second derivatives
are offered.
"""

import numpy as np

from .errors import ConfigurationError

PROFILE_KINDS = ("constant_bump", "gaussian_bump", "smooth_box")
TEST_FN_KINDS = ("cosine_bump", "polynomial_bump")


def _as_points(u, d):
    pts = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if pts.shape[-1] != d:
        raise ConfigurationError(f"points have {pts.shape[-1]} components, expected {d}")
    return pts


def _smoothstep5(w):
    # quintic smoothstep: 0 at 0, 1 at 1, C^2 at both ends
    return w * w * w * (10.0 + w * (-15.0 + 6.0 * w))


class DensityProfile:
    """Bounded, integrable, nonnegative initial density on R^d.

    kind:
      constant_bump  height on the centered box {|u_i| <= radius}
      gaussian_bump  height * exp(-|u|^2 / (2 width^2))
      smooth_box     height * product of C^2 plateau edges, support radius `radius`
    """

    def __init__(self, kind, d, height=1.0, radius=1.0, width=0.5):
        if kind not in PROFILE_KINDS:
            raise ConfigurationError(f"unknown profile kind {kind!r}, expected one of {PROFILE_KINDS}")
        if height < 0:
            raise ConfigurationError("profile height must be nonnegative")
        if radius <= 0 or width <= 0:
            raise ConfigurationError("profile radius/width must be positive")
        self.kind = kind
        self.d = int(d)
        self.height = float(height)
        self.radius = float(radius)
        self.width = float(width)

    def __repr__(self):
        return (
            f"DensityProfile({self.kind!r}, d={self.d}, height={self.height}, "
            f"radius={self.radius}, width={self.width})"
        )

    @property
    def support_radius(self):
        """Effective l-inf support radius (5 sigma for the Gaussian tail)."""
        if self.kind == "gaussian_bump":
            return 5.0 * self.width
        return self.radius

    @property
    def sup_norm(self):
        return self.height

    def __call__(self, u):
        pts = _as_points(u, self.d)
        if self.kind == "constant_bump":
            inside = np.all(np.abs(pts) <= self.radius, axis=-1)
            out = np.where(inside, self.height, 0.0)
        elif self.kind == "gaussian_bump":
            out = self.height * np.exp(-0.5 * np.sum(pts * pts, axis=-1) / self.width**2)
        else:  # smooth_box
            v = np.abs(pts) / self.radius
            edge = np.clip((v - 0.5) * 2.0, 0.0, 1.0)
            factors = np.where(v <= 1.0, 1.0 - _smoothstep5(edge), 0.0)
            out = self.height * np.prod(factors, axis=-1)
        if np.isscalar(u) or np.asarray(u).ndim <= 1:
            return float(out[0]) if out.shape == (1,) else out
        return out


def _poly_axis(y):
    """C^2 bump with an exactly quadratic core: value of f(|v|) for y = |v|."""
    out = np.zeros_like(y)
    core = y <= 1.0 / 3.0
    out[core] = 1.0 - (27.0 / 11.0) * y[core] ** 2
    mid = (~core) & (y <= 2.0 / 3.0)
    w = y[mid] - 1.0 / 3.0
    out[mid] = 8.0 / 11.0 + w * (-18.0 / 11.0 + w * (-27.0 / 11.0 + w * (135.0 / 22.0)))
    tail = (y > 2.0 / 3.0) & (y <= 1.0)
    out[tail] = (81.0 / 22.0) * (1.0 - y[tail]) ** 3
    return out


def _poly_axis_d2(y):
    """Second derivative of the quadratic-core bump at y = |v| (even in v)."""
    out = np.zeros_like(y)
    core = y <= 1.0 / 3.0
    out[core] = -54.0 / 11.0
    mid = (~core) & (y <= 2.0 / 3.0)
    out[mid] = -54.0 / 11.0 + (405.0 / 11.0) * (y[mid] - 1.0 / 3.0)
    tail = (y > 2.0 / 3.0) & (y <= 1.0)
    out[tail] = (243.0 / 11.0) * (1.0 - y[tail])
    return out


def _cos_axis(v):
    out = np.zeros_like(v)
    inside = np.abs(v) <= 1.0
    c = np.cos(0.5 * np.pi * v[inside])
    out[inside] = c**4
    return out


def _cos_axis_d2(v):
    out = np.zeros_like(v)
    inside = np.abs(v) <= 1.0
    c = np.cos(0.5 * np.pi * v[inside])
    s = np.sin(0.5 * np.pi * v[inside])
    out[inside] = np.pi**2 * c * c * (3.0 * s * s - c * c)
    return out


class TestFunction:
    """Compactly supported C^2 test function with a closed-form Laplacian.

    Both kinds are products of one-dimensional bumps on {|u_i| <= radius}:
      cosine_bump      cos(pi u_i / (2 radius))^4 per axis
      polynomial_bump  piecewise cubic per axis, exactly quadratic on
                       |u_i| <= radius/3 (second differences are exact there)
    """

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, kind, d, height=1.0, radius=1.0):
        if kind not in TEST_FN_KINDS:
            raise ConfigurationError(f"unknown test function kind {kind!r}, expected one of {TEST_FN_KINDS}")
        if radius <= 0:
            raise ConfigurationError("test function radius must be positive")
        self.kind = kind
        self.d = int(d)
        self.height = float(height)
        self.radius = float(radius)

    def __repr__(self):
        return f"TestFunction({self.kind!r}, d={self.d}, height={self.height}, radius={self.radius})"

    @property
    def support_radius(self):
        return self.radius

    def _axis_fns(self):
        if self.kind == "cosine_bump":
            return _cos_axis, _cos_axis_d2
        return (lambda v: _poly_axis(np.abs(v))), (lambda v: _poly_axis_d2(np.abs(v)))

    def __call__(self, u):
        fval, _ = self._axis_fns()
        pts = _as_points(u, self.d) / self.radius
        out = self.height * np.prod(fval(pts), axis=-1)
        if np.asarray(u).ndim <= 1:
            return float(out[0]) if out.shape == (1,) else out
        return out

    def laplacian(self, u):
        """Closed-form Laplacian (sum of per-axis second derivatives)."""
        fval, fd2 = self._axis_fns()
        pts = _as_points(u, self.d) / self.radius
        vals = fval(pts)
        d2 = fd2(pts)
        out = np.zeros(pts.shape[0])
        for i in range(self.d):
            term = d2[:, i].copy()
            for j in range(self.d):
                if j != i:
                    term *= vals[:, j]
            out += term
        out *= self.height / self.radius**2
        if np.asarray(u).ndim <= 1:
            return float(out[0]) if out.shape == (1,) else out
        return out
