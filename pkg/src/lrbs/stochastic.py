"""Stochastic single-species, coupled and two-species dynamics on a torus."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import (
    CompetitionKernel,
    DispersalKernel,
    ModelParams,
    OccupancyParams,
    ball_mask,
    center,
    colonization_horizon,
    default_m_tilde,
    derived_constants,
    dispersed_means,
    disperse,
    kernel_sum,
    occupied_mask,
    site_keys,
)
from .rng import RngKeyStream


def stochastic_step(field: np.ndarray, params: ModelParams, rng: RngKeyStream, t: int,
                    key_shift=None, stream: int = 0) -> np.ndarray:
    """xi_{t+1}(x) = Poisson(F(x; xi_t)) drawn with key (seed, stream, t, x)."""
    means = dispersed_means(np.asarray(field, dtype=np.float64), params)
    return rng.poisson_array(means, stream, t, site_keys(params.extent, key_shift))


# --- coupling ---------------------------------------------------------------------


@dataclass
class CoupledState:
    xi1: np.ndarray
    xi2: np.ndarray
    time: int = 0

    def __post_init__(self):
        if np.shape(self.xi1) != np.shape(self.xi2):
            raise ValueError("coupled fields must share geometry")


def coupled_step(state: CoupledState, params: ModelParams, rng: RngKeyStream, key_shift=None) -> CoupledState:
    """Shared-minimum coupling.

    With a = F(x; xi1), b = F(x; xi2):
    xi1 <- N0(a ^ b) + N1((a - b)+),  xi2 <- N0(a ^ b) + N2((b - a)+),
    using streams 0, 1, 2 at the same (t, x) key.
    """
    a = dispersed_means(state.xi1.astype(np.float64), params)
    b = dispersed_means(state.xi2.astype(np.float64), params)
    keys = site_keys(params.extent, key_shift)
    t = state.time
    shared = rng.poisson_array(np.minimum(a, b), 0, t, keys)
    x1 = shared + rng.poisson_array(np.maximum(a - b, 0.0), 1, t, keys)
    x2 = shared + rng.poisson_array(np.maximum(b - a, 0.0), 2, t, keys)
    return CoupledState(x1, x2, t + 1)


# --- two species ------------------------------------------------------------------


@dataclass(frozen=True)
class TwoSpeciesParams:
    """Two-type model; a cross kernel of None means no interspecific competition."""

    m1: float
    m2: float
    p1: DispersalKernel
    p2: DispersalKernel
    lam11: CompetitionKernel
    lam12: CompetitionKernel | None
    lam21: CompetitionKernel | None
    lam22: CompetitionKernel
    extent: tuple[int, ...]
    boundary: str = "torus"

    def __post_init__(self):
        for name in ("lam11", "lam22"):
            if getattr(self, name).lambda0 <= 0:
                raise ValueError(f"{name} needs a positive on-site coefficient")
        object.__setattr__(self, "extent", tuple(int(e) for e in self.extent))

    def species(self, i: int) -> ModelParams:
        """The single-species model seen by species i when the other is absent."""
        if i == 1:
            return ModelParams(self.m1, self.p1, self.lam11, self.extent, self.boundary)
        return ModelParams(self.m2, self.p2, self.lam22, self.extent, self.boundary)


def _two_species_means(xi1, xi2, tp: TwoSpeciesParams):
    a = np.asarray(xi1, dtype=np.float64)
    b = np.asarray(xi2, dtype=np.float64)
    bd = tp.boundary

    def comp(k: CompetitionKernel | None, z):
        return 0.0 if k is None else kernel_sum(z, k.offsets, k.weights, bd)

    f1 = a * np.maximum(tp.m1 - comp(tp.lam11, a) - comp(tp.lam12, b), 0.0)
    f2 = b * np.maximum(tp.m2 - comp(tp.lam21, a) - comp(tp.lam22, b), 0.0)
    return disperse(f1, tp.p1, bd), disperse(f2, tp.p2, bd)


def two_species_step(xi1, xi2, tparams: TwoSpeciesParams, rng: RngKeyStream, t: int):
    """One step of the two-type model; species i draws from stream i - 1."""
    F1, F2 = _two_species_means(xi1, xi2, tparams)
    keys = site_keys(tparams.extent)
    return rng.poisson_array(F1, 0, t, keys), rng.poisson_array(F2, 1, t, keys)


# --- trajectories -----------------------------------------------------------------


@dataclass
class RunRecord:
    times: list[int] = field(default_factory=list)
    total_mass: list[float] = field(default_factory=list)
    occupied: list[int] = field(default_factory=list)
    origin: list[int] = field(default_factory=list)
    agreement: list[float] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    extinct_at: int | None = None
    draws: list[tuple[np.ndarray, np.ndarray]] | None = None
    final: np.ndarray | None = None
    extra: dict[str, list] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def rows(self):
        for i, t in enumerate(self.times):
            row = {
                "time": t,
                "total_mass": self.total_mass[i],
                "occupied": self.occupied[i],
                "origin": self.origin[i],
            }
            if self.agreement:
                row["agreement"] = self.agreement[i]
            for k, v in self.extra.items():
                row[k] = v[i]
            yield row


def default_occupancy(params: ModelParams, delta: float = 0.1) -> OccupancyParams | None:
    """(eps1, eps2) from the colonization recipe, or None where it does not apply."""
    from .logistic import InfeasibleError, choose_epsilons

    if params.m <= 1:
        return None
    try:
        e1, e2 = choose_epsilons(params.m, delta, default_m_tilde(params.m), params.p)
    except (InfeasibleError, ValueError, RuntimeError):
        return None
    return OccupancyParams(e1, e2)


def _record(rec: RunRecord, t, z, params, occ, c):
    rec.times.append(int(t))
    rec.total_mass.append(float(z.sum()))
    rec.occupied.append(int(occupied_mask(z, params, occ).sum()) if occ is not None else 0)
    rec.origin.append(int(z[c] > 0))


def run_trajectory(
    field0: np.ndarray,
    params: ModelParams,
    steps: int,
    rng: RngKeyStream,
    hooks: Sequence[Callable] = (),
    early_stop: bool = True,
    record_draws: bool = False,
    occ: OccupancyParams | None | str = "auto",
    snapshot_steps: Sequence[int] = (),
) -> RunRecord:
    """Iterate the stochastic step and record per-step statistics.

    Each hook is called as ``hook(t, field)`` after the state at time t is
    recorded.  With ``early_stop`` the run ends once total mass is zero.
    ``record_draws`` keeps (means, draws) for every step.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if occ == "auto":
        occ = default_occupancy(params)
    z = np.asarray(field0).astype(np.int64)
    c = center(params.extent)
    snaps = set(int(s) for s in snapshot_steps)
    rec = RunRecord(draws=[] if record_draws else None)
    keys = site_keys(params.extent)

    def visit(t, z):
        _record(rec, t, z, params, occ, c)
        if t in snaps:
            rec.snapshots[t] = z.copy()
        for h in hooks:
            h(t, z)

    visit(0, z)
    if z.sum() == 0:
        rec.extinct_at = 0
    for t in range(steps):
        if early_stop and rec.extinct_at is not None:
            break
        means = dispersed_means(z.astype(np.float64), params)
        z = rng.poisson_array(means, 0, t, keys)
        if record_draws:
            rec.draws.append((means, z))
        visit(t + 1, z)
        if rec.extinct_at is None and z.sum() == 0:
            rec.extinct_at = t + 1
    rec.final = z
    return rec


def occupation_frequency(record: RunRecord) -> float:
    """(1/N) sum_{n=1..N} 1{xi_n(0) > 0}; the initial state is excluded."""
    if not record.origin:
        raise ValueError("empty record")
    tail = record.origin[1:]
    if not tail:
        return float(record.origin[0])
    return float(np.mean(tail))


# --- coupled runs -------------------------------------------------------------------


def default_block_length(params: ModelParams, m_tilde: float | None = None) -> int:
    """Smallest multiple of n* exceeding 1 / lambda0."""
    n_star = colonization_horizon(params.p, default_m_tilde(params.m) if m_tilde is None else m_tilde)
    k = int(np.floor(1.0 / (params.lambda0 * n_star))) + 1
    return k * n_star


def run_coupled(
    field1: np.ndarray,
    field2: np.ndarray,
    params: ModelParams,
    steps: int,
    window=None,
    rng: RngKeyStream | None = None,
    delta: float = 0.1,
    N: int | None = None,
    occ: OccupancyParams | None | str = "auto",
) -> tuple[RunRecord, int | None]:
    """Run the coupling and return (record, T).

    ``window`` is a sup-norm radius around the origin index (None means the
    whole torus).  T is the first time from which the two copies agree on
    the window through the end of the run.  The record carries the
    agreement fraction on the window and, per step, three indicators of the
    nested-box event: copies equal and in I on A_N, both in I on
    A_4N minus A_N, both in J on A_7N minus A_4N.  Balls larger than the
    torus are clipped to it.
    """
    if rng is None:
        raise ValueError("rng required")
    if occ == "auto":
        occ = default_occupancy(params, delta)
    extent = params.extent
    win = np.ones(extent, dtype=bool) if window is None else ball_mask(extent, int(window))
    N = default_block_length(params) if N is None else N
    r = params.lam.range + params.p.range + 1
    big = max(extent)
    A1, A4, A7 = (ball_mask(extent, min(k * N * r, big)) for k in (1, 4, 7))
    ring4, ring7 = A4 & ~A1, A7 & ~A4
    dc = derived_constants(params)
    I_lo, I_hi = (params.m - 1 - delta) / params.lambda0, (params.m - 1 + delta) / params.lambda0
    if occ is not None:
        J_lo, J_hi = occ.eps1 * dc.m_bar_0, (1 - occ.eps2) * dc.M
    else:
        J_lo, J_hi = I_lo, I_hi
    c = center(extent)
    st = CoupledState(np.asarray(field1).astype(np.int64), np.asarray(field2).astype(np.int64), 0)
    rec = RunRecord(extra={"eq_AN": [], "in_I_A4N": [], "in_J_A7N": []})
    last_disagree = None

    def inside(z, lo, hi, mask):
        v = z[mask]
        return bool(((v >= lo) & (v <= hi)).all())

    for t in range(steps + 1):
        if t > 0:
            st = coupled_step(st, params, rng)
        a, b = st.xi1, st.xi2
        same = a == b
        _record(rec, t, a, params, occ, c)
        rec.agreement.append(float(same[win].mean()))
        rec.extra["eq_AN"].append(int(same[A1].all() and inside(a, I_lo, I_hi, A1)))
        rec.extra["in_I_A4N"].append(int(inside(a, I_lo, I_hi, ring4) and inside(b, I_lo, I_hi, ring4)))
        rec.extra["in_J_A7N"].append(int(inside(a, J_lo, J_hi, ring7) and inside(b, J_lo, J_hi, ring7)))
        if not same[win].all():
            last_disagree = t
    rec.final = st.xi1
    T = 0 if last_disagree is None else (last_disagree + 1 if last_disagree < steps else None)
    return rec, T
