"""Oriented site percolation and good-block extraction from stochastic runs.

A percolation field is a boolean array ``open[..., n, y]`` over times
n = 0..horizon and sites y in the window [-W, W]^d, with the origin at the
window center.  Sites outside the window are treated as closed for forward
connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lattice import ModelParams, cube_offsets, shift
from .rng import RngKeyStream


@dataclass(frozen=True)
class PercolationField:
    theta: float
    horizon: int
    half_width: int
    d: int
    open: np.ndarray
    uniforms: np.ndarray

    @property
    def origin(self) -> tuple[int, ...]:
        return (self.half_width,) * self.d

    def at_theta(self, theta: float) -> "PercolationField":
        """Same uniforms, different open probability."""
        return PercolationField(theta, self.horizon, self.half_width, self.d, self.uniforms < theta, self.uniforms)


def sample_percolation(theta: float, half_width: int, horizon: int, rng: RngKeyStream, d: int = 1,
                       stream: int = 0) -> PercolationField:
    """Keyed Bernoulli(theta) field: site (y, n) is open iff u(stream, n, y) < theta."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    side = 2 * half_width + 1
    shape = (side,) * d
    keys = np.arange(side**d, dtype=np.uint64).reshape(shape)
    u = np.stack([rng.uniform_array(stream, n, keys) for n in range(horizon + 1)])
    return PercolationField(theta, horizon, half_width, d, u < theta, u)


def _dilate(a: np.ndarray, d: int, fill: bool = False) -> np.ndarray:
    """OR over the sup-norm unit ball in the trailing d axes; outside the window is ``fill``."""
    if fill:
        return ~_erode_complement(a, d)
    out = np.zeros_like(a)
    for off in cube_offsets(d, 1):
        out |= shift(a, off, "zero")
    return out


def _erode_complement(a: np.ndarray, d: int) -> np.ndarray:
    # AND of ~a over the unit ball with outside counting as False for ~a
    out = np.ones_like(a)
    pad = [(0, 0)] * (a.ndim - d) + [(1, 1)] * d
    na = np.pad(~a, pad, constant_values=False)
    for off in cube_offsets(d, 1):
        sl = tuple([slice(None)] * (a.ndim - d) + [slice(1 + o, 1 + o + n) for o, n in zip(off, a.shape[-d:])])
        out &= na[sl]
    return out


def _open_array(field) -> tuple[np.ndarray, int]:
    if isinstance(field, PercolationField):
        return field.open, field.d
    a = np.asarray(field, dtype=bool)
    return a, a.ndim - 1


def cluster_of_origin(field, d: int | None = None) -> np.ndarray:
    """C_0 as a boolean mask shaped like the open array.

    (y, n) is in C_0 iff some path (0,0), (y_1,1), ..., (y_n,n) = (y,n) with
    sup-norm steps <= 1 has every (y_i, i), i >= 1, open.  The origin itself
    is always a member.  Leading batch axes are allowed when ``d`` is given.
    """
    a, d0 = _open_array(field)
    d = d0 if d is None else d
    taxis = a.ndim - d - 1
    a = np.moveaxis(a, taxis, 0)
    C = np.zeros_like(a)
    origin = tuple(s // 2 for s in a.shape[-d:])
    C[(0, Ellipsis) + origin] = True
    for n in range(1, a.shape[0]):
        C[n] = a[n] & _dilate(C[n - 1], d)
    return np.moveaxis(C, 0, taxis)


def classify_wet_dry(field):
    """Wet mask, dry-cluster labels and dry-cluster sizes.

    (x, n) is wet iff an open backward path reaches time 0 (time 0 is wet).
    Dry clusters are connected components of non-wet sites under sup-norm
    <= 1 adjacency in space-time.
    """
    a, d = _open_array(field)
    wet = np.zeros_like(a)
    wet[0] = True
    for n in range(1, a.shape[0]):
        wet[n] = a[n] & _dilate(wet[n - 1], d)
    labels, count = ndimage.label(~wet, structure=np.ones((3,) * (d + 1), dtype=bool))
    sizes = np.bincount(labels.ravel())[1:] if count else np.zeros(0, dtype=np.int64)
    return wet, labels, sizes


def exposed_sites(field, cluster: np.ndarray, cone_slope: float, from_time: int = 1) -> np.ndarray:
    """Mask of C_0-exposed sites inside the cone |y| <= cone_slope * n, n >= from_time.

    (y, n) is exposed iff a backward path y_n = y, y_{n-1}, ..., y_0 with
    sup-norm steps <= 1 has (y_k, k) outside C_0 for k = 1..n (the point
    itself included).  Sites beyond the window count as outside C_0.
    """
    _, d = _open_array(field)
    C = np.asarray(cluster, dtype=bool)
    E = np.zeros_like(C)
    E[0] = True
    for k in range(1, C.shape[0]):
        E[k] = ~C[k] & _dilate(E[k - 1], d, fill=True)
    hw = C.shape[-1] // 2
    grids = np.meshgrid(*[np.arange(s) - hw for s in C.shape[1:]], indexing="ij")
    dist = np.max(np.abs(np.stack(grids)), axis=0)
    n = np.arange(C.shape[0]).reshape((-1,) + (1,) * d)
    cone = (dist[None] <= cone_slope * n) & (n >= from_time)
    return E & cone


def reaches_horizon(cluster: np.ndarray) -> bool:
    return bool(cluster[-1].any())


# --- good blocks from stochastic runs ------------------------------------------------


@dataclass(frozen=True)
class GoodBlockField:
    good: np.ndarray
    bad_A: np.ndarray
    bad_B: np.ndarray
    n_star: int

    @property
    def bad_fraction(self) -> float:
        return float(1.0 - self.good.mean()) if self.good.size else 0.0


def extract_good_blocks(record, params: ModelParams, eps2: float, delta: float, K: float, n_star: int) -> GoodBlockField:
    """Indicator of A(x, N) and B(x, N) at coarse times N = 0, n*, 2 n*, ...

    ``record.draws[t]`` holds (means, draws) of the step t -> t + 1.  A box
    point (y, j) of X translated to (x, N) refers to the draw of step N + j.
    A fails if such a draw exceeds (1 - eps2) M; B fails if a draw whose
    mean is >= K deviates from it by more than delta * mean.  Every site
    of the torus is a coarse site.
    """
    draws = getattr(record, "draws", None)
    if draws is None:
        raise ValueError("run was not recorded with draws")
    cap = (1 - eps2) * params.M
    r = params.p.range + params.lam.range
    n_blocks = len(draws) // n_star
    shape = (n_blocks,) + tuple(params.extent)
    bad_A = np.zeros(shape, dtype=bool)
    bad_B = np.zeros(shape, dtype=bool)
    mode = "wrap" if params.boundary == "torus" else "constant"
    for b in range(n_blocks):
        for j in range(n_star):
            means, x = draws[b * n_star + j]
            x = np.asarray(x, dtype=np.float64)
            a = x > cap
            bb = (means >= K) & (np.abs(x - means) > delta * means)
            if j:
                size = 2 * j * r + 1
                a = ndimage.maximum_filter(a, size=size, mode=mode)
                bb = ndimage.maximum_filter(bb, size=size, mode=mode)
            bad_A[b] |= a
            bad_B[b] |= bb
    return GoodBlockField(good=~(bad_A | bad_B), bad_A=bad_A, bad_B=bad_B, n_star=n_star)


@dataclass(frozen=True)
class DominationReport:
    density: float
    p_target: float
    dominates: bool
    correlations: dict[int, float]
    n: int


def domination_report(good, p_target: float, max_lag: int = 3) -> DominationReport:
    """Good density and spatial pair correlations along the first spatial axis."""
    g = np.asarray(getattr(good, "good", good), dtype=np.float64)
    dens = float(g.mean()) if g.size else 1.0
    corr = {}
    spatial = g.reshape((-1,) + g.shape[-1:]) if g.ndim > 1 else g[None]
    var = spatial.var()
    for lag in range(1, max_lag + 1):
        if var == 0:
            corr[lag] = 0.0
            continue
        a = spatial - spatial.mean()
        corr[lag] = float((a * np.roll(a, lag, axis=-1)).mean() / var)
    return DominationReport(dens, p_target, dens >= p_target, corr, int(g.size))
