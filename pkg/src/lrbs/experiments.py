"""Experiment presets behind the command line.

Every preset returns per-replica summary rows and per-step series rows.
``write_artifacts`` turns them into ``summary.csv`` and ``series.ndjson``
(plus snapshots and optional SVG plots).  Replicas may run on several
threads; results are collected in replica order so the files do not
depend on the thread count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cml as cml_mod
from . import logistic, percolation, stochastic
from .config import RunConfig
from .lattice import ModelParams, ball_mask, center, derived_constants, make_competition_kernel, site_keys
from .rng import RngKeyStream
from .snapshot import save_snapshot

log = logging.getLogger(__name__)


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentResult:
    summary: list[dict] = field(default_factory=list)
    series: list[dict] = field(default_factory=list)
    snapshots: list[tuple[str, np.ndarray, int]] = field(default_factory=list)
    plots: list[tuple] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    tables: dict[str, list[dict]] = field(default_factory=dict)


# --- initial conditions -------------------------------------------------------------


def initial_field(spec: str, params: ModelParams, rng: RngKeyStream | None = None, real: bool = False) -> np.ndarray:
    """Build a starting field from a short description.

    ``mbar``             m_bar everywhere (rounded unless ``real``)
    ``constant:v``       v everywhere
    ``single:v``         v at the origin, 0 elsewhere
    ``poisson:v``        independent Poisson(v) values (needs ``rng``)
    ``wave:a``           m_bar (1 + a sin(2 pi (x_1 + ... + x_d) / L))
    ``checker:a``        m_bar (1 +- a) on a checkerboard
    """
    kind, _, arg = spec.partition(":")
    extent = params.extent
    mbar = derived_constants(params).m_bar_kappa
    if kind == "mbar":
        z = np.full(extent, mbar)
    elif kind == "constant":
        z = np.full(extent, float(arg))
    elif kind == "single":
        z = np.zeros(extent)
        z[center(extent)] = float(arg)
    elif kind == "poisson":
        if rng is None:
            raise ExperimentError("poisson initial field needs a seed")
        return rng.poisson_array(np.full(extent, float(arg)), 9, 0, site_keys(extent))
    elif kind in ("wave", "checker"):
        a = float(arg)
        idx = np.indices(extent).sum(axis=0)
        if kind == "wave":
            z = mbar * (1 + a * np.sin(2 * np.pi * idx / extent[0]))
        else:
            z = mbar * (1 + a * np.where(idx % 2 == 0, 1.0, -1.0))
    else:
        raise ExperimentError(f"unknown initial field {spec!r}")
    if real:
        return z.astype(np.float64)
    return np.rint(z).astype(np.int64)


# --- presets --------------------------------------------------------------------------


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _rng(cfg: RunConfig, r: int) -> RngKeyStream:
    return RngKeyStream(cfg.seed).for_replica(r)


def _series_rows(rec, **tags):
    for row in rec.rows():
        yield {**tags, **row}


def run_simulate(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    params = cfg.params()
    steps = cfg.get("steps", 500)
    replicas = cfg.get("replicas", 10)
    init = cfg.get("init", "mbar")
    snaps = cfg.get("snapshots", ())
    occ = "auto" if cfg.get("occupancy", True) else None

    def one(r):
        rng = _rng(cfg, r)
        z0 = initial_field(init, params, rng)
        return stochastic.run_trajectory(
            z0, params, steps, rng, early_stop=cfg.get("early_stop", True), occ=occ, snapshot_steps=snaps
        )

    res = ExperimentResult()
    for r, rec in enumerate(_map(one, range(replicas), threads)):
        alive = rec.extinct_at is None
        res.summary.append({
            "replica": r,
            "m": params.m,
            "lambda0": params.lambda0,
            "steps": steps,
            "extinct_at": "" if alive else rec.extinct_at,
            "alive": int(alive),
            "final_mass": rec.total_mass[-1],
            "occupation_frequency": stochastic.occupation_frequency(rec),
        })
        res.series.extend(_series_rows(rec, replica=r))
        for t, z in sorted(rec.snapshots.items()):
            res.snapshots.append((f"replica{r}_step{t}", z, t))
        if r == 0:
            res.plots.append(("mass.svg", "series", rec.times, {"replica 0": rec.total_mass}, "total mass", False))
            if rec.final is not None:
                res.plots.append(("final_field.svg", "field", rec.final, "replica 0, final"))
    return res


def run_survival_sweep(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    ms = cfg.get("m_values", (0.9, 1.5, 2.0))
    lams = cfg.get("lambda0_values", (cfg.get("lambda0", 0.01),))
    steps = cfg.get("steps", 300)
    replicas = cfg.get("replicas", 10)
    init = cfg.get("init", "single:10")
    res = ExperimentResult()
    jobs = [(m, l0, r) for m in ms for l0 in lams for r in range(replicas)]

    def one(job):
        m, l0, r = job
        params = cfg.params(m=m, lambda0=l0)
        rng = _rng(cfg, r)
        return stochastic.run_trajectory(initial_field(init, params, rng), params, steps, rng, occ=None)

    recs = _map(one, jobs, threads)
    curves = {}
    for (m, l0, r), rec in zip(jobs, recs):
        alive = rec.extinct_at is None
        res.summary.append({
            "m": m, "lambda0": l0, "replica": r, "alive": int(alive),
            "extinct_at": "" if alive else rec.extinct_at,
            "occupation_frequency": stochastic.occupation_frequency(rec),
        })
        mass = np.zeros(steps + 1)
        mass[: len(rec.total_mass)] = rec.total_mass
        curves.setdefault((m, l0), []).append(mass)
    for (m, l0), arr in curves.items():
        mean = np.mean(arr, axis=0)
        for t, v in enumerate(mean):
            res.series.append({"m": m, "lambda0": l0, "time": t, "mean_mass": float(v)})
    res.plots.append(("mean_mass.svg", "series", list(range(steps + 1)),
                      {f"m={m} l0={l}": np.mean(a, axis=0) for (m, l), a in curves.items()}, "mean mass", False))
    return res


def run_cml(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    params = cfg.params(m=cfg.get("m", 2.5), lambda0=cfg.get("lambda0", 1.0))
    window = cfg.get("window", 0)
    tol = cfg.get("tol", 1e-8)
    max_steps = cfg.get("max_steps", cfg.get("steps", 5000))
    z0 = initial_field(cfg.get("init", "single:1"), params, real=True)
    rep = cml_mod.converge_locally(z0, params, window=window, tol=tol, max_steps=max_steps)
    res = ExperimentResult()
    res.summary.append({
        "m": params.m, "lambda0": params.lambda0, "kappa": params.kappa, "target": rep.target,
        "converged": int(rep.converged), "N0": "" if rep.N0 is None else rep.N0,
        "steps": len(rep.history) - 1, "final_deviation": rep.history[-1],
    })
    res.series.extend({"time": t, "max_deviation": d} for t, d in enumerate(rep.history))
    res.plots.append(("deviation.svg", "series", list(range(len(rep.history))),
                      {"max |zeta - m_bar|": np.maximum(rep.history, 1e-300)}, "deviation", True))
    return res


def run_couple(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    params = cfg.params(lambda0=cfg.get("lambda0", 0.005))
    steps = cfg.get("steps", 2000)
    replicas = cfg.get("replicas", 10)
    window = cfg.get("window")
    delta = cfg.get("delta", 0.1)

    def one(r):
        rng = _rng(cfg, r)
        a = initial_field(cfg.get("init", "wave:0.1"), params, rng)
        b = initial_field(cfg.get("init2", "checker:0.1"), params, rng.for_replica(1))
        return stochastic.run_coupled(a, b, params, steps, window=window, rng=rng, delta=delta)

    res = ExperimentResult()
    for r, (rec, T) in enumerate(_map(one, range(replicas), threads)):
        res.summary.append({"replica": r, "T": "" if T is None else T, "coupled": int(T is not None),
                            "final_agreement": rec.agreement[-1]})
        res.series.extend(_series_rows(rec, replica=r))
        if r == 0:
            res.plots.append(("agreement.svg", "series", rec.times, {"replica 0": rec.agreement}, "agreement", False))
    return res


def two_species_params(cfg: RunConfig, cross: float | None = None) -> stochastic.TwoSpeciesParams:
    d = cfg.dim
    l0 = cfg.get("lambda0", 0.01)
    c = cfg.get("cross", 0.001) if cross is None else cross
    o = (0,) * d

    def kern(name, default):
        raw = cfg.kernels.get(name)
        return make_competition_kernel(d, raw if raw is not None else {o: default})

    if c > 0 or "competition12" in cfg.kernels:
        k12 = kern("competition12", c)
        k21 = kern("competition21", c)
    else:
        k12 = k21 = None
    return stochastic.TwoSpeciesParams(
        m1=cfg.get("m", 2.0), m2=cfg.get("m2", cfg.get("m", 2.0)),
        p1=cfg.dispersal(), p2=cfg.dispersal("dispersal2"),
        lam11=kern("competition11", l0), lam12=k12, lam21=k21,
        lam22=kern("competition22", l0), extent=cfg.extent, boundary=cfg.get("boundary", "torus"),
    )


def _run_two_species(tp, steps, rng, init1, init2):
    a, b = init1, init2
    m1, m2 = [float(a.sum())], [float(b.sum())]
    for t in range(steps):
        a, b = stochastic.two_species_step(a, b, tp, rng, t)
        m1.append(float(a.sum()))
        m2.append(float(b.sum()))
        if m1[-1] == 0 and m2[-1] == 0:
            break
    return m1, m2


def run_two_species(cfg: RunConfig, threads: int = 1, cross_values=None) -> ExperimentResult:
    steps = cfg.get("steps", 500)
    replicas = cfg.get("replicas", 10)
    crosses = cross_values if cross_values is not None else (cfg.get("cross", 0.001),)
    jobs = [(c, r) for c in crosses for r in range(replicas)]

    def one(job):
        c, r = job
        tp = two_species_params(cfg, c)
        rng = _rng(cfg, r)
        l0 = tp.lam11.lambda0
        eq = (tp.m1 - 1) / (l0 + c)
        spec = cfg.get("init", f"constant:{eq:.6g}")
        z1 = initial_field(spec, tp.species(1), rng.for_replica(1))
        z2 = initial_field(cfg.get("init2", spec), tp.species(2), rng.for_replica(2))
        return _run_two_species(tp, steps, rng, z1, z2)

    res = ExperimentResult()
    for (c, r), (m1, m2) in zip(jobs, _map(one, jobs, threads)):
        res.summary.append({"cross": c, "replica": r, "mass1": m1[-1], "mass2": m2[-1],
                            "both_alive": int(m1[-1] > 0 and m2[-1] > 0), "steps": len(m1) - 1})
        res.series.extend({"cross": c, "replica": r, "time": t, "mass1": a, "mass2": b}
                          for t, (a, b) in enumerate(zip(m1, m2)))
        if r == 0 and c == crosses[0]:
            res.plots.append(("masses.svg", "series", list(range(len(m1))), {"species 1": m1, "species 2": m2},
                              "total mass", False))
    return res


def run_coexistence_sweep(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    return run_two_species(cfg, threads, cross_values=cfg.get("cross_values", (0.0, 0.001, 0.002)))


def run_logistic(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    ms = cfg.get("m_values", (cfg.get("m", 2.5),) if "m" in cfg.values else (1.2, 1.5, 2.0, 2.3, 2.7, 2.9))
    epss = cfg.get("eps_values", (cfg.get("eps", 0.01),))
    res = ExperimentResult()
    for m in ms:
        for eps in epss:
            try:
                s = logistic.lemma12_sequences(m, eps)
            except (logistic.ConstructionError, ValueError) as e:
                res.summary.append({"m": m, "eps": eps, "ok": 0, "case": "", "N0": "", "gamma": "",
                                    "attempts": "", "error": str(e)})
                continue
            res.summary.append({"m": m, "eps": eps, "ok": 1, "case": s.case, "N0": s.N0, "gamma": s.gamma,
                                "attempts": s.attempts, "error": ""})
            rows = [{"m": m, "eps": eps, "n": n, "alpha": a, "beta": b}
                    for n, (a, b) in enumerate(zip(s.alphas, s.betas))]
            res.series.extend(rows)
            res.tables.setdefault("sequences.csv", []).extend(rows)
    return res


def run_lemma7(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    m = cfg.get("m", 2.0)
    delta = cfg.get("delta", 0.1)
    K = cfg.get("K", 10.0)
    p = cfg.dispersal()
    th = cml_mod.lemma7_thresholds(m, p, delta, K, cfg.get("m_tilde"))
    lambda0 = cfg.get("lambda0", 0.9 * th.lambda0_star)
    if lambda0 > th.lambda0_star:
        raise ExperimentError(f"lambda0={lambda0} exceeds lambda0*={th.lambda0_star!r}")
    params = cfg.params(m=m, lambda0=lambda0)
    n = cfg.get("adversaries", 20)

    def one(s):
        seed = None if s < 0 else int(RngKeyStream(cfg.seed).for_replica(s).master_seed)
        return cml_mod.lemma7_sandbox(params, delta=delta, K=K, m_tilde=cfg.get("m_tilde"), adversary_seed=seed)

    res = ExperimentResult(meta={"lambda0_star": th.lambda0_star, "kappa_star": th.kappa_star, "n_star": th.n_star})
    for s, v in zip(range(-1, n), _map(one, range(-1, n), threads)):
        res.summary.append({"adversary": "none" if s < 0 else s, "ok": int(v.ok), "broken": ";".join(v.broken),
                            "lambda0": lambda0, "lambda0_star": th.lambda0_star, "kappa_star": th.kappa_star,
                            "n_star": th.n_star, "eps1": th.eps1, "eps2": th.eps2})
    return res


def lemma14_replica(theta, half_width, horizon, cone, burn_in, rng):
    f = percolation.sample_percolation(theta, half_width, horizon, rng)
    C = percolation.cluster_of_origin(f)
    survived = percolation.reaches_horizon(C)
    E = percolation.exposed_sites(f, C, cone)
    times = np.nonzero(E.reshape(E.shape[0], -1).any(axis=1))[0]
    last = int(times.max()) if times.size else -1
    wet, _, sizes = percolation.classify_wet_dry(f)
    return {
        "survived": int(survived), "cluster_size": int(C.sum()), "wet_fraction": float(wet.mean()),
        "largest_dry": int(sizes.max()) if sizes.size else 0, "last_exposed": last,
        "clean_after_burn_in": int(last < burn_in),
    }, C


def run_percolation(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    theta = cfg.get("theta", 0.95)
    horizon = cfg.get("horizon", 200)
    hw = cfg.get("half_width", horizon)
    cone = cfg.get("cone_slope", 0.2)
    burn = cfg.get("burn_in", 20)
    replicas = cfg.get("replicas", 100)

    def one(r):
        return lemma14_replica(theta, hw, horizon, cone, burn, _rng(cfg, r))

    res = ExperimentResult()
    for r, (row, C) in enumerate(_map(one, range(replicas), threads)):
        res.summary.append({"replica": r, "theta": theta, **row})
        counts = C.reshape(C.shape[0], -1).sum(axis=1)
        res.series.extend({"replica": r, "time": t, "cluster_count": int(c)} for t, c in enumerate(counts))
        if r == 0:
            res.plots.append(("cluster.svg", "spacetime", C, "cluster of the origin, replica 0"))
    return res


def tv_distance(a, b, bins) -> float:
    ha, _ = np.histogram(a, bins=bins)
    hb, _ = np.histogram(b, bins=bins)
    return 0.5 * float(np.abs(ha / max(ha.sum(), 1) - hb / max(hb.sum(), 1)).sum())


def run_complete_convergence(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    """Two initial laws, long runs, origin means and window histograms.

    Values on the window after ``burn_in`` are pooled over time and
    replicas.  Histograms use ``bins`` equal bins on [0, 2 m_bar].
    """
    params = cfg.params()
    steps = cfg.get("steps", 5000)
    burn = cfg.get("burn_in", 500)
    replicas = cfg.get("replicas", 2)
    window = cfg.get("window", 2)
    laws = (cfg.get("init", "poisson:20"), cfg.get("init2", "constant:150"))
    mbar = derived_constants(params).m_bar_kappa
    mask = ball_mask(params.extent, window)
    c = center(params.extent)
    bins = np.linspace(0, 2 * mbar, cfg.get("bins", 20) + 1)

    def one(job):
        li, r = job
        rng = _rng(cfg, 2 * r + li)
        origin, pooled = [], []

        def hook(t, z):
            if t >= burn:
                origin.append(int(z[c]))
                pooled.append(z[mask].copy())

        rec = stochastic.run_trajectory(initial_field(laws[li], params, rng), params, steps, rng,
                                        hooks=[hook], early_stop=False, occ=None)
        return rec, np.array(origin), np.concatenate(pooled) if pooled else np.zeros(0)

    jobs = [(li, r) for li in range(2) for r in range(replicas)]
    out = _map(one, jobs, threads)
    res = ExperimentResult()
    per_law = {0: ([], []), 1: ([], [])}
    for (li, r), (rec, origin, pooled) in zip(jobs, out):
        per_law[li][0].append(origin)
        per_law[li][1].append(pooled)
        res.series.extend(_series_rows(rec, law=li, replica=r))
    pooled = [np.concatenate(per_law[i][1]) for i in range(2)]
    tv = tv_distance(pooled[0], pooled[1], bins)
    for i in range(2):
        o = np.concatenate(per_law[i][0])
        mean = float(o.mean()) if o.size else 0.0
        res.summary.append({"law": i, "init": laws[i], "origin_mean": mean, "m_bar": mbar,
                            "relative_error": abs(mean - mbar) / mbar, "tv_distance": tv})
    return res


PRESETS = {
    "simulate": run_simulate,
    "cml": run_cml,
    "couple": run_couple,
    "two-species": run_two_species,
    "logistic": run_logistic,
    "lemma7": run_lemma7,
    "percolation": run_percolation,
    "survival-sweep": run_survival_sweep,
    "coexistence-sweep": run_coexistence_sweep,
    "complete-convergence": run_complete_convergence,
}


def run_experiment(cfg: RunConfig, threads: int = 1) -> ExperimentResult:
    return PRESETS[cfg.experiment](cfg, threads=threads)


# --- artifacts --------------------------------------------------------------------------


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _write_csv(path, rows) -> None:
    cols: list[str] = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _plain(v) for k, v in row.items()})


def write_artifacts(res: ExperimentResult, cfg: RunConfig, out_dir, plots: bool = False) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, rows in [("summary.csv", res.summary), *res.tables.items()]:
        path = os.path.join(out_dir, name)
        _write_csv(path, rows)
        written.append(path)
    path = os.path.join(out_dir, "series.ndjson")
    with open(path, "w") as fh:
        for row in res.series:
            fh.write(json.dumps({k: _plain(v) for k, v in row.items()}) + "\n")
    written.append(path)
    for name, z, t in res.snapshots:
        p = os.path.join(out_dir, "snapshots", name + ".lrbs")
        save_snapshot(z, p, step=t, seed=cfg.seed)
        written.append(p)
    if plots:
        from . import plotting

        for spec in res.plots:
            name, kind, *args = spec
            p = os.path.join(out_dir, name)
            if kind == "series":
                x, series, ylabel, logy = args
                plotting.timeseries_plot(p, list(x), series, ylabel=ylabel, logy=logy)
            elif kind == "field":
                plotting.field_plot(p, *args)
            else:
                plotting.spacetime_plot(p, *args)
            written.append(p)
        for name, z, t in res.snapshots:
            p = os.path.join(out_dir, "snapshots", name + ".svg")
            plotting.field_plot(p, z, title=f"step {t}")
            written.append(p)
    return written
