"""Deterministic coupled map lattice, its perturbed version, and convergence checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import (
    DispersalKernel,
    ModelParams,
    OccupancyParams,
    SpaceTimeBox,
    ball_mask,
    center,
    colonization_horizon,
    default_m_tilde,
    derived_constants,
    disperse,
    dispersed_means,
    occupied_mask,
    s_weights,
    spacetime_box_X,
)
from .logistic import choose_epsilons


class EscapeError(ValueError):
    """Field values left the domain of the single-site map."""


class PerturbationError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SingleSiteMap:
    """g: [0, G] -> [0, G] with g(0) = 0 and an attracting fixed point a_bar."""

    g: Callable
    G: float
    a_bar: float


def cml_step(field: np.ndarray, params: ModelParams) -> np.ndarray:
    return dispersed_means(field, params)


def generalized_cml_step(
    field: np.ndarray, g: SingleSiteMap | Callable, p: DispersalKernel, G: float | None = None,
    boundary: str = "torus",
) -> np.ndarray:
    """zeta'(x) = sum_y g(zeta(y)) p_{yx}."""
    if isinstance(g, SingleSiteMap):
        G = g.G if G is None else G
        g = g.g
    z = np.asarray(field, dtype=np.float64)
    if G is not None:
        tol = 1e-12 * max(1.0, G)
        if z.min() < -tol or z.max() > G + tol:
            raise EscapeError(f"field values outside [0, {G}]")
    out = disperse(np.asarray(g(z), dtype=np.float64), p, boundary)
    if G is not None and (out.min() < -tol or out.max() > G + tol):
        raise EscapeError("g is not self-mapping on [0, G]")
    return out


def perturbed_step(field: np.ndarray, params: ModelParams, provider, time: int) -> np.ndarray:
    """zeta'(x) = F(x; zeta) + delta(x) with delta supplied by ``provider(time, means)``.

    ``provider`` returns an array of perturbations (or None for none).  Tiny
    negative results from rounding are clamped to zero; anything below -F
    beyond rounding is an error.
    """
    means = dispersed_means(field, params)
    if provider is None:
        return means
    delta = provider(time, means)
    if delta is None:
        return means
    delta = np.asarray(delta, dtype=np.float64)
    out = means + delta
    tol = 1e-9 * np.maximum(1.0, means)
    if (out < -tol).any():
        raise PerturbationError("perturbation pushes the field below zero")
    return np.maximum(out, 0.0)


class PoissonResidual:
    """delta(x) = N(F(x)) - F(x), so a perturbed step reproduces one stochastic step."""

    def __init__(self, rng, stream: int = 0, keys: np.ndarray | None = None):
        self.rng = rng
        self.stream = stream
        self.keys = keys

    def __call__(self, time: int, means: np.ndarray) -> np.ndarray:
        from .lattice import site_keys

        keys = site_keys(means.shape) if self.keys is None else self.keys
        return self.rng.poisson_array(means, self.stream, time, keys) - means


class ScaledProvider:
    def __init__(self, factor: float):
        self.factor = factor

    def __call__(self, time, means):
        return self.factor * means


# --- (B1) / (B2) ---------------------------------------------------------------


def _box_values(arrays: Sequence[np.ndarray], box: SpaceTimeBox, at: Sequence[int]):
    for y, n in box:
        arr = arrays[n]
        idx = tuple((a + v) % e for a, v, e in zip(at, y, arr.shape))
        yield (y, n), arr[idx]


def box_violations_B1(means, deltas, params: ModelParams, eps2: float, box: SpaceTimeBox, at=None):
    at = center(params.extent) if at is None else at
    cap = (1 - eps2) * params.M
    out = []
    for (pt, F), (_, dl) in zip(_box_values(means, box, at), _box_values(deltas, box, at)):
        if F + dl > cap:
            out.append(pt)
    return out


def box_violations_B2(means, deltas, delta: float, K: float, box: SpaceTimeBox, at=None):
    at = center(means[0].shape) if at is None else at
    out = []
    for (pt, F), (_, dl) in zip(_box_values(means, box, at), _box_values(deltas, box, at)):
        if F >= K and abs(dl) > delta * F:
            out.append(pt)
    return out


def check_B1(means, deltas, params: ModelParams, eps2: float, box: SpaceTimeBox, at=None) -> bool:
    """F + delta <= (1 - eps2) M at every box point.

    ``means[n]`` and ``deltas[n]`` are the mean field F(.; zeta_n) and the
    perturbation delta_n; box points (y, n) are offsets from ``at``.
    """
    return not box_violations_B1(means, deltas, params, eps2, box, at)


def check_B2(means, deltas, delta: float, K: float, box: SpaceTimeBox, at=None) -> bool:
    """F >= K implies |delta| <= delta F at every box point (closed inequality)."""
    return not box_violations_B2(means, deltas, delta, K, box, at)


# --- colonization sandbox -----------------------------------------------------


@dataclass(frozen=True)
class Lemma7Thresholds:
    eps1: float
    eps2: float
    n_star: int
    i_min: float
    lambda0_star: float
    kappa_star: float
    alpha: float


def lemma7_thresholds(m, p, delta, K, m_tilde=None, eps1=None, eps2=None) -> Lemma7Thresholds:
    """lambda0* and kappa* following the colonization recipe.

    i_min is the smallest m_tilde^n p^n_{0y} over S; lambda0* makes
    eps1 * m_bar * i_min >= K; kappa* makes (1-eps2) M kappa* lambda0 <= alpha
    with alpha = (m - m_tilde) / 2.
    """
    m_tilde = default_m_tilde(m) if m_tilde is None else m_tilde
    if eps1 is None or eps2 is None:
        e1, e2 = choose_epsilons(m, delta, m_tilde, p)
        eps1 = e1 if eps1 is None else eps1
        eps2 = e2 if eps2 is None else eps2
    n_star = colonization_horizon(p, m_tilde)
    i_min = min(s_weights(p, n_star, m_tilde).values())
    alpha = 0.5 * (m - m_tilde)
    return Lemma7Thresholds(
        eps1=eps1,
        eps2=eps2,
        n_star=n_star,
        i_min=i_min,
        lambda0_star=eps1 * (m - 1) * i_min / K,
        kappa_star=alpha / ((1 - eps2) * m),
        alpha=alpha,
    )


@dataclass
class Lemma7Verdict:
    ok: bool
    initial_values: list[float]
    per_start: list[bool]
    broken: list[str] = field(default_factory=list)
    thresholds: Lemma7Thresholds | None = None


def _adversary(rng, t, means, in_box, cap, delta, K):
    """Per-point saturating perturbation with an independent random sign."""
    from .lattice import site_keys

    u = rng.uniform_array(0, t, site_keys(means.shape))
    sign = np.where(u < 0.5, -1.0, 1.0)
    big = means >= K
    d = np.where(big, sign * delta * means, np.where(sign > 0, cap - means, -means))
    d = np.minimum(d, cap - means)
    d = np.maximum(d, -means)
    return np.where(in_box, d, 0.0)


def lemma7_sandbox(
    params: ModelParams,
    eps1: float | None = None,
    eps2: float | None = None,
    delta: float = 0.1,
    K: float = 10.0,
    m_tilde: float | None = None,
    adversary_seed: int | None = 0,
    starts: int = 4,
    inject_b1_violation: bool = False,
    check_preconditions: bool = True,
) -> Lemma7Verdict:
    """Run n* perturbed steps from a single occupied site and test colonization.

    The origin starts at several values between eps1 * m_bar0 and
    (1 - eps2) M, all other sites empty.  An adversary perturbs every point
    of the space-time box X, saturating the (B1)/(B2) bounds with random
    signs (``adversary_seed=None`` gives zero perturbation).  The verdict is
    whether every |x|_inf <= 1 is (eps1, eps2)-occupied at time n*.
    """
    from .rng import RngKeyStream

    m = params.m
    th = lemma7_thresholds(m, params.p, delta, K, m_tilde, eps1, eps2)
    if check_preconditions:
        if params.lambda0 > th.lambda0_star:
            raise PreconditionError(
                f"lambda0={params.lambda0} exceeds lambda0*={th.lambda0_star:.6g}"
            )
        if params.kappa > th.kappa_star * params.lambda0:
            raise PreconditionError(
                f"kappa={params.kappa} exceeds kappa* lambda0={th.kappa_star * params.lambda0:.6g}"
            )
    occ = OccupancyParams(th.eps1, th.eps2)
    dc = derived_constants(params)
    cap = (1 - th.eps2) * dc.M
    lo = th.eps1 * dc.m_bar_0
    r = params.p.range + params.lam.range
    need = 2 * (th.n_star * r + params.lam.range + 1) + 1
    if min(params.extent) < need:
        params = params.with_(extent=(max(need, max(params.extent)),) * params.d)
    box, _ = spacetime_box_X(params, th.n_star)
    c = center(params.extent)
    by_time = box.by_time()
    rng = RngKeyStream(adversary_seed) if adversary_seed is not None else None
    values = list(np.geomspace(lo, cap, starts)) if starts > 1 else [lo]
    per_start, broken = [], []
    target = ball_mask(params.extent, 1)
    for i, v in enumerate(values):
        z = np.zeros(params.extent)
        z[c] = v
        for n in range(th.n_star):
            means = dispersed_means(z, params)
            in_box = np.zeros(params.extent, dtype=bool)
            for y in by_time.get(n, []):
                in_box[tuple((a + b) % e for a, b, e in zip(c, y, params.extent))] = True
            if rng is not None:
                d = _adversary(rng.for_replica(i), n, means, in_box, cap, delta, K)
            else:
                d = np.zeros_like(means)
            if inject_b1_violation and n == th.n_star - 1:
                d[c] = cap - means[c] + 1.0
            if (in_box & (means + d > cap)).any():
                broken.append("B1")
            if (in_box & (means >= K) & (np.abs(d) > delta * means)).any():
                broken.append("B2")
            z = np.maximum(means + d, 0.0)
        occupied = occupied_mask(z, params, occ)
        per_start.append(bool(occupied[target].all()))
    return Lemma7Verdict(
        ok=all(per_start), initial_values=[float(v) for v in values], per_start=per_start,
        broken=sorted(set(broken)), thresholds=th,
    )


# --- local convergence ----------------------------------------------------------


@dataclass
class ConvergenceReport:
    converged: bool
    N0: int | None
    history: list[float]
    target: float


def _window_mask(extent, window) -> np.ndarray:
    if isinstance(window, (int, np.integer)):
        return ball_mask(extent, int(window))
    mask = np.zeros(tuple(extent), dtype=bool)
    c = center(extent)
    for x in window:
        x = (x,) if isinstance(x, (int, np.integer)) else tuple(x)
        mask[tuple((a + b) % e for a, b, e in zip(c, x, extent))] = True
    return mask


def converge_locally(
    field0: np.ndarray,
    system: ModelParams | SingleSiteMap,
    window=0,
    tol: float = 1e-8,
    max_steps: int = 5000,
    p: DispersalKernel | None = None,
    settle: int = 50,
) -> ConvergenceReport:
    """Iterate the lattice map and track max |zeta_n(x) - target| on a window.

    ``window`` is a sup-norm radius around the origin index or a list of
    offsets.  The run stops after ``max_steps`` or once the deviation has
    stayed below ``tol * 1e-3`` for ``settle`` consecutive steps.  N0 is the
    first recorded step from which every later deviation is within ``tol``.
    """
    z = np.asarray(field0, dtype=np.float64)
    if isinstance(system, ModelParams):
        target = derived_constants(system).m_bar_kappa
        step = lambda a: cml_step(a, system)  # noqa: E731
        extent = system.extent
    else:
        if p is None:
            raise ValueError("a SingleSiteMap needs a dispersal kernel")
        target = system.a_bar
        step = lambda a: generalized_cml_step(a, system, p)  # noqa: E731
        extent = z.shape
    mask = _window_mask(extent, window)
    history = [float(np.abs(z[mask] - target).max())]
    quiet = 0
    for _ in range(max_steps):
        z = step(z)
        dev = float(np.abs(z[mask] - target).max())
        history.append(dev)
        quiet = quiet + 1 if dev <= tol * 1e-3 else 0
        if quiet >= settle:
            break
    n0 = None
    for i in range(len(history) - 1, -1, -1):
        if history[i] > tol:
            break
        n0 = i
    return ConvergenceReport(converged=n0 is not None, N0=n0, history=history, target=target)


# --- nested boxes ---------------------------------------------------------------


@dataclass(frozen=True)
class NestedBoxes:
    """Radii of the sup-norm balls Lambda' and Lambda_0 ... Lambda_n0 around the origin."""

    prime_radius: int
    radii: tuple[int, ...]
    extent: tuple[int, ...]

    def mask(self, radius: int) -> np.ndarray:
        return ball_mask(self.extent, radius)

    def ring(self, i: int) -> np.ndarray:
        """Lambda_i minus Lambda_{i+1} (Lambda_n0 itself for the last index)."""
        inner = self.mask(self.radii[i])
        if i + 1 < len(self.radii):
            inner &= ~self.mask(self.radii[i + 1])
        return inner


def nested_boxes(window_radius: int, n0: int, n1: int, r: int, extent: Sequence[int]) -> NestedBoxes:
    """Lambda' = N_{(n0+n1) r}(Lambda), Lambda_i = N_{(n0-i) r}(Lambda).

    r = R_p for the single-site-map lemma, r = R_lambda + R_p with neighbor
    competition.
    """
    extent = tuple(int(e) for e in extent)
    prime = window_radius + (n0 + n1) * r
    if 2 * prime + 1 > min(extent):
        raise ValueError(f"box of radius {prime} does not fit in torus {extent}")
    radii = tuple(window_radius + (n0 - i) * r for i in range(n0 + 1))
    return NestedBoxes(prime_radius=prime, radii=radii, extent=extent)
