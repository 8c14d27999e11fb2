"""Location sets: spatial (or space-time) coordinates with pairwise access."""

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError

__all__ = ["LocationSet", "perturbed_grid", "uniform_sites", "space_time_product"]


class LocationSet:
    """Distinct d-dimensional points (d in {1, 2}) with an optional time axis.

    Distances and lags are computed lazily and cached; ``pairs_within``
    enumerates index pairs inside a spatial (and temporal) cut-off through a
    k-d tree, so the cost scales with the number of qualifying neighbours
    rather than all n^2 pairs.
    """

    def __init__(self, coords, times=None):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.ndim != 2 or coords.shape[1] not in (1, 2):
            raise DataError(f"coordinates must be (n, d) with d in {{1, 2}}, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise DataError("coordinates must be finite")
        self.coords = coords
        if times is not None:
            times = np.asarray(times, dtype=float).ravel()
            if times.shape[0] != coords.shape[0]:
                raise DataError("times must align with coordinates")
            if not np.all(np.isfinite(times)):
                raise DataError("times must be finite")
        self.times = times
        key = coords if times is None else np.column_stack([coords, times])
        if np.unique(key, axis=0).shape[0] != coords.shape[0]:
            raise DataError("location points must be pairwise distinct")
        self._dist = None
        self._tlag = None
        self._tree = None

    def __len__(self):
        return self.coords.shape[0]

    @property
    def has_time(self):
        return self.times is not None

    def distance_matrix(self):
        if self._dist is None:
            diff = self.coords[:, None, :] - self.coords[None, :, :]
            self._dist = np.sqrt(np.sum(diff * diff, axis=-1))
        return self._dist

    def time_lag_matrix(self):
        if self.times is None:
            return None
        if self._tlag is None:
            self._tlag = self.times[:, None] - self.times[None, :]
        return self._tlag

    def cross_distance(self, other):
        diff = self.coords[:, None, :] - other.coords[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def cross_time_lag(self, other):
        if self.times is None and other.times is None:
            return None
        if (self.times is None) != (other.times is None):
            raise DataError("cannot mix timed and untimed location sets")
        return self.times[:, None] - other.times[None, :]

    def pairs_within(self, xi_s, xi_t=None):
        """Index pairs (i < j) with spatial distance <= xi_s (inclusive) and,
        when a time axis is present, |time lag| <= xi_t.

        Returns ``(i, j, dist, tlag)`` with pairs sorted by (i, j); ``tlag``
        is None for purely spatial sets.
        """
        if not xi_s > 0.0:
            raise ValueError("spatial cut-off must be positive")
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        pairs = self._tree.query_pairs(r=xi_s, output_type="ndarray")
        if pairs.shape[0] == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, np.empty(0), (np.empty(0) if self.has_time else None)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        pairs = pairs[order]
        i, j = pairs[:, 0], pairs[:, 1]
        dist = np.sqrt(np.sum((self.coords[i] - self.coords[j]) ** 2, axis=1))
        tlag = None
        if self.has_time:
            if xi_t is None:
                raise ValueError("space-time locations require a temporal cut-off xi_t")
            tlag = self.times[i] - self.times[j]
            keep = np.abs(tlag) <= xi_t
            i, j, dist, tlag = i[keep], j[keep], dist[keep], tlag[keep]
        return i, j, dist, tlag

    def subset(self, idx):
        return LocationSet(
            self.coords[idx], None if self.times is None else self.times[idx]
        )


def perturbed_grid(n_per_side, spacing=0.05, jitter=0.015, seed=0):
    """Regular n x n grid with i.i.d. uniform jitter on each coordinate.

    The jitter must stay below half the spacing so perturbed points remain
    distinct and well separated.
    """
    if n_per_side < 1:
        raise ValueError("n_per_side must be positive")
    if not jitter < spacing / 2.0:
        raise ValueError("jitter must be smaller than spacing / 2")
    from .rng import SeedSpec

    rng = SeedSpec.coerce(seed).generator("grid")
    axis = np.arange(n_per_side) * spacing
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    if jitter > 0.0:
        pts = pts + rng.uniform(-jitter, jitter, size=pts.shape)
    return LocationSet(pts)


def uniform_sites(n, seed=0, side=1.0):
    """n sites uniformly distributed in the square [0, side]^2."""
    from .rng import SeedSpec

    rng = SeedSpec.coerce(seed).generator("sites")
    return LocationSet(rng.uniform(0.0, side, size=(int(n), 2)))


def space_time_product(spatial, times):
    """Space-time location set: every spatial site observed at every time."""
    times = np.asarray(times, dtype=float).ravel()
    n, k = len(spatial), times.shape[0]
    coords = np.repeat(spatial.coords, k, axis=0)
    tcol = np.tile(times, n)
    return LocationSet(coords, tcol)
