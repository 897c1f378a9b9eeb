"""Periodic d-dimensional lattice geometry.

Sites of the torus ``{0,...,L-1}^d`` are flattened row-major into indices
``0..L^d-1``.  Coordinates are reported in the centered representation
``[-floor(L/2), L-1-floor(L/2)]`` so that compactly supported initial data
and test functions can be evaluated around the origin.
"""

import numpy as np

from .errors import ConfigurationError


class TorusGeometry:
    """Cubic torus with side ``L`` in dimension ``d``.

    Immutable after construction; safe to share across workers.
    """

    def __init__(self, d, L):
        if not (isinstance(d, (int, np.integer)) and d >= 1):
            raise ConfigurationError(f"dimension must be a positive integer, got {d!r}")
        if not (isinstance(L, (int, np.integer)) and L >= 3):
            raise ConfigurationError(
                f"side length must be an integer >= 3 (L=2 would double edges), got {L!r}"
            )
        self.d = int(d)
        self.L = int(L)
        self.n_sites = self.L**self.d
        # row-major strides: index = sum_k coord_k * stride_k
        self.strides = tuple(self.L ** (self.d - 1 - k) for k in range(self.d))
        self.half = self.L // 2

    def __repr__(self):
        return f"TorusGeometry(d={self.d}, L={self.L})"

    def __eq__(self, other):
        return (
            isinstance(other, TorusGeometry)
            and self.d == other.d
            and self.L == other.L
        )

    def __hash__(self):
        return hash((self.d, self.L))

    def site_index(self, coord):
        """Flatten a coordinate tuple (any integer representatives) to its index."""
        coord = np.asarray(coord, dtype=np.int64)
        if coord.shape != (self.d,):
            raise ConfigurationError(
                f"coordinate has {coord.shape} components, geometry is {self.d}-dimensional"
            )
        idx = 0
        for k in range(self.d):
            idx += (int(coord[k]) % self.L) * self.strides[k]
        return idx

    def coord_of_index(self, index):
        """Centered coordinate of a site index."""
        if not 0 <= index < self.n_sites:
            raise ConfigurationError(f"site index {index} out of range [0, {self.n_sites})")
        out = np.empty(self.d, dtype=np.int64)
        rem = int(index)
        for k in range(self.d - 1, -1, -1):
            c = rem % self.L
            rem //= self.L
            out[k] = self.center(c)
        return out

    def center(self, c):
        """Map a raw coordinate in [0, L) to its centered representative."""
        c = c % self.L
        return c - self.L if c > self.L - 1 - self.half else c

    def neighbors(self, index):
        """The 2d nearest neighbors of a site, as indices."""
        if not 0 <= index < self.n_sites:
            raise ConfigurationError(f"site index {index} out of range [0, {self.n_sites})")
        out = []
        for k in range(self.d):
            s = self.strides[k]
            c = (index // s) % self.L
            out.append(index + s if c + 1 < self.L else index + s * (1 - self.L))
            out.append(index - s if c > 0 else index + s * (self.L - 1))
        return out

    def all_coords_centered(self):
        """(n_sites, d) array of centered coordinates, in index order."""
        idx = np.arange(self.n_sites)
        out = np.empty((self.n_sites, self.d), dtype=np.int64)
        rem = idx.copy()
        for k in range(self.d - 1, -1, -1):
            c = rem % self.L
            rem //= self.L
            out[:, k] = np.where(c > self.L - 1 - self.half, c - self.L, c)
        return out

    def neighbor_table(self):
        """(n_sites, 2d) int64 array; column 2k / 2k+1 is the +/- neighbor along axis k."""
        idx = np.arange(self.n_sites)
        nbr = np.empty((self.n_sites, 2 * self.d), dtype=np.int64)
        for k in range(self.d):
            s = self.strides[k]
            c = (idx // s) % self.L
            nbr[:, 2 * k] = np.where(c + 1 < self.L, idx + s, idx + s * (1 - self.L))
            nbr[:, 2 * k + 1] = np.where(c > 0, idx - s, idx + s * (self.L - 1))
        return nbr
