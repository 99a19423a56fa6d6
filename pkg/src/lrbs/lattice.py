"""Kernels, model parameters and the mean-offspring maps on a finite torus.

Fields are plain numpy arrays whose shape is the torus extent.  Integer
arrays hold particle counts, float arrays hold deterministic masses.  Kernels
are stored sparsely as an ``(k, d)`` array of offsets and a ``(k,)`` array of
weights.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Mapping, Sequence

import numpy as np


class KernelError(ValueError):
    """A kernel violates one of the model assumptions (A1) or (A2)."""


class HorizonCapExceeded(RuntimeError):
    pass


def _as_offset(key, d: int) -> tuple[int, ...]:
    if isinstance(key, (int, np.integer)):
        key = (int(key),)
    key = tuple(int(v) for v in key)
    if len(key) != d:
        raise KernelError(f"offset {key} does not have dimension {d}")
    return key


def _sup_norm(offsets: np.ndarray) -> int:
    if len(offsets) == 0:
        return 0
    return int(np.abs(offsets).max())


def _support_return_times(offsets: np.ndarray, horizon: int) -> list[int]:
    """Times j <= horizon at which the walk restricted to the support can sit at 0."""
    d = offsets.shape[1]
    steps = [tuple(o) for o in offsets]
    zero = (0,) * d
    current = {zero}
    times = []
    for j in range(1, horizon + 1):
        current = {tuple(a + b for a, b in zip(x, s)) for x in current for s in steps}
        if zero in current:
            times.append(j)
    return times


@dataclass(frozen=True)
class DispersalKernel:
    d: int
    offsets: np.ndarray
    weights: np.ndarray
    range: int

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in o): float(w) for o, w in zip(self.offsets, self.weights)}

    def mean(self) -> np.ndarray:
        return self.weights @ self.offsets


@dataclass(frozen=True)
class CompetitionKernel:
    """Competition kernel split as lambda_{0x} = kappa * gamma_{0x} off the diagonal."""

    d: int
    lambda0: float
    kappa: float
    gamma_offsets: np.ndarray
    gamma_weights: np.ndarray
    range: int

    @property
    def offsets(self) -> np.ndarray:
        return np.vstack([np.zeros((1, self.d), dtype=np.int64), self.gamma_offsets])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([[self.lambda0], self.kappa * self.gamma_weights])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in o): float(w) for o, w in zip(self.offsets, self.weights)}

    def gamma_dict(self) -> dict[tuple[int, ...], float]:
        return {
            tuple(int(v) for v in o): float(w)
            for o, w in zip(self.gamma_offsets, self.gamma_weights)
        }


@dataclass(frozen=True)
class InteractionKernel:
    """Nonnegative finite-range kernel with no further constraints (cross competition)."""

    d: int
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _parse_weights(d: int, weights: Mapping) -> tuple[np.ndarray, np.ndarray]:
    if not weights:
        raise KernelError("kernel has no weights")
    merged: dict[tuple[int, ...], float] = {}
    for key, w in weights.items():
        off = _as_offset(key, d)
        merged[off] = merged.get(off, 0.0) + float(w)
    items = sorted(merged.items())
    offsets = np.array([k for k, _ in items], dtype=np.int64).reshape(len(items), d)
    values = np.array([v for _, v in items], dtype=np.float64)
    return offsets, values


def make_dispersal_kernel(d: int, weights: Mapping) -> DispersalKernel:
    """Validate a dispersal kernel against (A1).

    ``weights`` maps offsets (ints in d=1, tuples otherwise) to probabilities.
    The weights are renormalized when their sum is within 1e-9 of one.
    """
    offsets, w = _parse_weights(d, weights)
    if (w < 0).any():
        raise KernelError("(A1) violated: negative dispersal weight")
    total = w.sum()
    if abs(total - 1.0) > 1e-9:
        raise KernelError(f"(A1) violated: dispersal weights sum to {total!r}, not 1")
    keep = w > 0
    offsets, w = offsets[keep], w[keep] / total
    mean = w @ offsets
    if np.abs(mean).max() > 1e-12:
        raise KernelError(f"(A1) violated: dispersal kernel has nonzero mean {mean.tolist()}")
    r = max(1, _sup_norm(offsets))
    horizon = 2 * r * d + 16
    times = _support_return_times(offsets, horizon)
    g = reduce(math.gcd, times, 0)
    if g != 1:
        raise KernelError(
            f"(A1) violated: dispersal kernel is periodic (gcd of return times is {g})"
        )
    return DispersalKernel(d=d, offsets=offsets, weights=w, range=r)


def make_competition_kernel(d: int, raw_lambda: Mapping) -> CompetitionKernel:
    """Validate a competition kernel against (A2) and split off its diagonal."""
    offsets, w = _parse_weights(d, raw_lambda)
    if (w < 0).any():
        raise KernelError("(A2) violated: negative competition coefficient")
    origin = np.all(offsets == 0, axis=1)
    lambda0 = float(w[origin].sum())
    if lambda0 <= 0:
        raise KernelError("(A2) violated: on-site competition lambda_00 must be > 0")
    off = ~origin & (w > 0)
    g_off, g_w = offsets[off], w[off]
    kappa = float(g_w.sum())
    gamma = g_w / kappa if kappa > 0 else g_w
    return CompetitionKernel(
        d=d,
        lambda0=lambda0,
        kappa=kappa,
        gamma_offsets=g_off.reshape(-1, d),
        gamma_weights=gamma,
        range=max(1, _sup_norm(g_off)),
    )


def make_interaction_kernel(d: int, raw: Mapping) -> InteractionKernel:
    offsets, w = _parse_weights(d, raw) if raw else (np.zeros((0, d), np.int64), np.zeros(0))
    if (w < 0).any():
        raise KernelError("negative interaction coefficient")
    keep = w > 0
    return InteractionKernel(d=d, offsets=offsets[keep].reshape(-1, d), weights=w[keep])


@dataclass(frozen=True)
class DerivedConstants:
    m_star: float
    M: float
    m_bar_kappa: float
    m_bar_0: float
    m_bar_defined: bool

    def __iter__(self):
        return iter((self.m_star, self.M, self.m_bar_kappa, self.m_bar_0))


@dataclass(frozen=True)
class ModelParams:
    m: float
    p: DispersalKernel
    lam: CompetitionKernel
    extent: tuple[int, ...]
    boundary: str = "torus"

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.p.d != self.lam.d:
            raise ValueError("dispersal and competition kernels differ in dimension")
        ext = tuple(int(e) for e in self.extent)
        object.__setattr__(self, "extent", ext)
        if len(ext) != self.p.d:
            raise ValueError(f"extent {ext} does not match dimension {self.p.d}")
        if self.boundary not in ("torus", "zero"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        need = 2 * (self.p.range + self.lam.range) + 1
        if min(ext) < need:
            raise ValueError(f"torus extent {ext} too small; every side must be >= {need}")

    @property
    def d(self) -> int:
        return self.p.d

    @property
    def lambda0(self) -> float:
        return self.lam.lambda0

    @property
    def kappa(self) -> float:
        return self.lam.kappa

    @property
    def m_star(self) -> float:
        return self.m**2 / (4 * self.lambda0)

    @property
    def M(self) -> float:
        return self.m / self.lambda0

    @property
    def m_bar(self) -> float:
        return derived_constants(self).m_bar_kappa

    @property
    def m_bar0(self) -> float:
        return derived_constants(self).m_bar_0

    def with_(self, **changes) -> "ModelParams":
        values = dict(m=self.m, p=self.p, lam=self.lam, extent=self.extent, boundary=self.boundary)
        values.update(changes)
        return ModelParams(**values)


def derived_constants(params: ModelParams) -> DerivedConstants:
    """(m*, M, m_bar(lambda0, kappa), m_bar(lambda0, 0)).

    For m <= 1 the equilibria are not positive; both m_bar values are returned
    as 0 and ``m_bar_defined`` is False.
    """
    m, l0, k = params.m, params.lambda0, params.kappa
    ok = m > 1
    return DerivedConstants(
        m_star=m * m / (4 * l0),
        M=m / l0,
        m_bar_kappa=(m - 1) / (l0 + k) if ok else 0.0,
        m_bar_0=(m - 1) / l0 if ok else 0.0,
        m_bar_defined=ok,
    )


# --- field operations -------------------------------------------------------


def shift(a: np.ndarray, offset: Sequence[int], boundary: str = "torus") -> np.ndarray:
    """Return b with b[x] = a[x - offset] over the trailing ``len(offset)`` axes."""
    d = len(offset)
    axes = tuple(range(a.ndim - d, a.ndim))
    if boundary == "torus":
        return np.roll(a, tuple(int(o) for o in offset), axis=axes)
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    for ax, o in zip(axes, offset):
        n = a.shape[ax]
        o = int(o)
        if abs(o) >= n:
            return out
        if o >= 0:
            src[ax], dst[ax] = slice(0, n - o), slice(o, n)
        else:
            src[ax], dst[ax] = slice(-o, n), slice(0, n + o)
    out[tuple(dst)] = a[tuple(src)]
    return out


def kernel_sum(a: np.ndarray, offsets: np.ndarray, weights: np.ndarray, boundary: str) -> np.ndarray:
    """sum_o w_o a[x + o]."""
    out = np.zeros(a.shape, dtype=np.float64)
    for o, w in zip(offsets, weights):
        out += w * shift(a, -o, boundary)
    return out


def offspring_means(field: np.ndarray, params: ModelParams) -> np.ndarray:
    """f(x; eta) at every site."""
    eta = np.asarray(field, dtype=np.float64)
    lam = params.lam
    bracket = params.m - lam.lambda0 * eta
    if lam.kappa > 0:
        bracket -= lam.kappa * kernel_sum(eta, lam.gamma_offsets, lam.gamma_weights, params.boundary)
    return eta * np.maximum(bracket, 0.0)


def disperse(f: np.ndarray, p: DispersalKernel, boundary: str = "torus") -> np.ndarray:
    """sum_y f(y) p_{yx}."""
    out = np.zeros(f.shape, dtype=np.float64)
    for o, w in zip(p.offsets, p.weights):
        out += w * shift(f, o, boundary)
    return out


def dispersed_means(field: np.ndarray, params: ModelParams) -> np.ndarray:
    """F(x; eta) at every site."""
    return disperse(offspring_means(field, params), params.p, params.boundary)


def _wrap(x, params: ModelParams) -> tuple[int, ...]:
    x = (x,) if isinstance(x, (int, np.integer)) else tuple(x)
    if params.boundary == "torus":
        return tuple(int(v) % e for v, e in zip(x, params.extent))
    return tuple(int(v) for v in x)


def _at(field: np.ndarray, x: tuple[int, ...], params: ModelParams) -> float:
    if params.boundary == "zero" and any(v < 0 or v >= e for v, e in zip(x, params.extent)):
        return 0.0
    return float(field[x])


def local_mean_offspring(x, field: np.ndarray, params: ModelParams) -> float:
    """f(x; eta) at a single site, computed directly from the definition."""
    x = _wrap(x, params)
    eta_x = _at(field, x, params)
    comp = params.lambda0 * eta_x
    for o, g in zip(params.lam.gamma_offsets, params.lam.gamma_weights):
        comp += params.kappa * g * _at(field, _wrap(tuple(np.add(x, o)), params), params)
    return eta_x * max(params.m - comp, 0.0)


def dispersed_mean(x, field: np.ndarray, params: ModelParams) -> float:
    """F(x; eta) at a single site."""
    x = _wrap(x, params)
    total = 0.0
    for o, w in zip(params.p.offsets, params.p.weights):
        y = _wrap(tuple(np.subtract(x, o)), params)
        if params.boundary == "zero" and any(v < 0 or v >= e for v, e in zip(y, params.extent)):
            continue
        total += w * local_mean_offspring(y, field, params)
    return total


# --- occupancy --------------------------------------------------------------


@dataclass(frozen=True)
class OccupancyParams:
    eps1: float
    eps2: float

    def __post_init__(self):
        for name in ("eps1", "eps2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


def occupancy_bounds(params: ModelParams, occ: OccupancyParams) -> tuple[float, float]:
    dc = derived_constants(params)
    return occ.eps1 * dc.m_bar_0, (1 - occ.eps2) * dc.M


def cube_offsets(d: int, r: int) -> np.ndarray:
    return np.array(list(itertools.product(range(-r, r + 1), repeat=d)), dtype=np.int64)


def neighborhood_max(a: np.ndarray, r: int, boundary: str = "torus", d: int | None = None) -> np.ndarray:
    d = a.ndim if d is None else d
    out = None
    for o in cube_offsets(d, r):
        s = shift(a, o, boundary)
        out = s if out is None else np.maximum(out, s)
    return out


def occupied_mask(field: np.ndarray, params: ModelParams, occ: OccupancyParams) -> np.ndarray:
    """Boolean array of (eps1, eps2)-occupied sites."""
    lo, hi = occupancy_bounds(params, occ)
    eta = np.asarray(field, dtype=np.float64)
    ok_self = (eta >= lo) & (eta <= hi)
    return ok_self & (neighborhood_max(eta, params.lam.range, params.boundary) <= hi)


def is_occupied(x, field: np.ndarray, params: ModelParams, occ: OccupancyParams) -> bool:
    x = _wrap(x, params)
    lo, hi = occupancy_bounds(params, occ)
    v = _at(field, x, params)
    if not lo <= v <= hi:
        return False
    for o in cube_offsets(params.d, params.lam.range):
        if _at(field, _wrap(tuple(np.add(x, o)), params), params) > hi:
            return False
    return True


# --- kernel powers and the colonization horizon ------------------------------


def kernel_power(p: DispersalKernel, n: int) -> dict[tuple[int, ...], float]:
    """n-step transition probabilities p^n_{0x}, keyed by offset."""
    if n < 0:
        raise ValueError("n must be >= 0")
    arr, origin = _dense_power(p, n)
    return _dense_to_dict(arr, origin)


def _dense_to_dict(arr: np.ndarray, origin: int) -> dict[tuple[int, ...], float]:
    out = {}
    for idx in zip(*np.nonzero(arr)):
        out[tuple(int(i) - origin for i in idx)] = float(arr[idx])
    return out


def _convolve_once(arr: np.ndarray, p: DispersalKernel) -> np.ndarray:
    r = p.range
    out = np.zeros(tuple(s + 2 * r for s in arr.shape))
    for o, w in zip(p.offsets, p.weights):
        sl = tuple(slice(r + int(v), r + int(v) + s) for v, s in zip(o, arr.shape))
        out[sl] += w * arr
    return out


def _dense_power(p: DispersalKernel, n: int) -> tuple[np.ndarray, int]:
    arr = np.ones((1,) * p.d)
    for _ in range(n):
        arr = _convolve_once(arr, p)
    return arr, n * p.range


def default_m_tilde(m: float) -> float:
    """(1 + m) / 2, kept strictly inside (1, m)."""
    mt = (1 + m) / 2
    return min(max(mt, np.nextafter(1.0, 2.0)), np.nextafter(m, 0.0))


def colonization_horizon(p: DispersalKernel, m_tilde: float, cap: int = 2000) -> int:
    """Smallest j >= 1 with p^j_{0x} * m_tilde**j >= 1 for every |x|_inf <= 1."""
    if m_tilde <= 1:
        raise ValueError("m_tilde must exceed 1")
    log_mt = math.log(m_tilde)
    arr = np.ones((1,) * p.d)
    neigh = cube_offsets(p.d, 1)
    for j in range(1, cap + 1):
        arr = _convolve_once(arr, p)
        c = j * p.range
        vals = np.array([arr[tuple(c + v for v in o)] for o in neigh])
        if (vals > 0).all() and (np.log(vals) + j * log_mt >= 0).all():
            return j
    raise HorizonCapExceeded(
        f"no horizon within {cap} steps; m_tilde={m_tilde} is too close to 1"
    )


# --- space-time boxes ---------------------------------------------------------


@dataclass(frozen=True)
class SpaceTimeBox:
    points: frozenset
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def size(self) -> int:
        return len(self.points)

    def __contains__(self, item) -> bool:
        return item in self.points

    def __iter__(self):
        return iter(sorted(self.points, key=lambda yt: (yt[1], yt[0])))

    def by_time(self) -> dict[int, list[tuple[int, ...]]]:
        out: dict[int, list] = {}
        for y, n in self:
            out.setdefault(n, []).append(y)
        return out


def spacetime_box_S(p: DispersalKernel, n_star: int) -> SpaceTimeBox:
    """{(y, j): p^j_{0y} > 0, 0 <= j <= n_star}."""
    pts = set()
    arr = np.ones((1,) * p.d)
    for j in range(n_star + 1):
        if j:
            arr = _convolve_once(arr, p)
        c = j * p.range
        for idx in zip(*np.nonzero(arr)):
            pts.add((tuple(int(i) - c for i in idx), j))
    return SpaceTimeBox(frozenset(pts), {"n_star": n_star})


def spacetime_box_X(params: ModelParams, n_star: int) -> tuple[SpaceTimeBox, int]:
    """{(y, n): n < n_star, |y|_inf <= n (R_p + R_lambda)} and its size."""
    r = params.p.range + params.lam.range
    pts = set()
    for n in range(n_star):
        for y in itertools.product(range(-n * r, n * r + 1), repeat=params.d):
            pts.add((tuple(y), n))
    box = SpaceTimeBox(frozenset(pts), {"n_star": n_star})
    return box, box.size


def s_weights(p: DispersalKernel, n_star: int, m_tilde: float) -> dict[tuple[tuple[int, ...], int], float]:
    """m_tilde^j p^j_{0y} over the set S."""
    out = {}
    for j in range(n_star + 1):
        for y, v in kernel_power(p, j).items():
            out[(y, j)] = v * m_tilde**j
    return out


def center(extent: Sequence[int]) -> tuple[int, ...]:
    """Array index used as the spatial origin."""
    return tuple(e // 2 for e in extent)


def ball_mask(extent: Sequence[int], radius: int, at: Sequence[int] | None = None) -> np.ndarray:
    """Sup-norm ball around ``at`` (default: the origin index) with torus wrap."""
    at = center(extent) if at is None else at
    grids = np.meshgrid(*[np.arange(e) for e in extent], indexing="ij")
    dist = np.zeros(tuple(extent), dtype=np.int64)
    for g, c, e in zip(grids, at, extent):
        dd = np.abs(g - c)
        dist = np.maximum(dist, np.minimum(dd, e - dd))
    return dist <= radius


def site_keys(extent: Sequence[int], key_shift: Sequence[int] | None = None) -> np.ndarray:
    """Row-major key of every site; with ``key_shift`` site x uses the key of x - shift."""
    keys = np.arange(int(np.prod(extent)), dtype=np.uint64).reshape(tuple(extent))
    if key_shift is not None:
        keys = np.roll(keys, tuple(int(s) for s in key_shift), axis=tuple(range(len(extent))))
    return keys
