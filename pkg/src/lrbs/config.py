"""Line-oriented run configuration.

    # comment
    experiment = simulate
    m = 2
    lambda0 = 0.01
    extent = 64,64
    seed = 1

    [dispersal]
    0,0: 0.5
    1,0: 0.125
    ...

Scalar keys use ``key = value``.  Kernel sections hold ``offset: weight``
lines with comma-separated offsets.  Without a ``[dispersal]`` section the
lazy nearest-neighbour walk is used; without ``[competition]`` the
competition kernel is purely on-site with weight ``lambda0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lattice import (
    HorizonCapExceeded,
    ModelParams,
    colonization_horizon,
    default_m_tilde,
    derived_constants,
    make_competition_kernel,
    make_dispersal_kernel,
)

EXPERIMENTS = (
    "simulate",
    "cml",
    "couple",
    "two-species",
    "logistic",
    "lemma7",
    "percolation",
    "survival-sweep",
    "coexistence-sweep",
    "complete-convergence",
)

KERNEL_SECTIONS = (
    "dispersal",
    "competition",
    "dispersal2",
    "competition11",
    "competition12",
    "competition21",
    "competition22",
)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(" ", "").split(",") if v)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


KEYS = {
    "experiment": str,
    "dim": int,
    "extent": _ints,
    "boundary": str,
    "m": float,
    "lambda0": float,
    "steps": int,
    "replicas": int,
    "seed": int,
    "snapshots": _ints,
    "init": str,
    "init2": str,
    "delta": float,
    "K": float,
    "m_tilde": float,
    "window": int,
    "tol": float,
    "max_steps": int,
    "eps": float,
    "m_values": _floats,
    "eps_values": _floats,
    "lambda0_values": _floats,
    "cross_values": _floats,
    "m2": float,
    "cross": float,
    "theta": float,
    "half_width": int,
    "horizon": int,
    "cone_slope": float,
    "burn_in": int,
    "adversaries": int,
    "early_stop": _bool,
    "occupancy": _bool,
    "bins": int,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    seed: int
    values: dict = field(default_factory=dict)
    kernels: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    declared: str | None = None

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def dim(self) -> int:
        if "dim" in self.values:
            return self.values["dim"]
        if "extent" in self.values:
            return len(self.values["extent"])
        for sec in ("dispersal", "competition"):
            if self.kernels.get(sec):
                return len(next(iter(self.kernels[sec])))
        return 1

    @property
    def extent(self) -> tuple[int, ...]:
        e = self.values.get("extent", (64,))
        if len(e) == 1 and self.dim > 1:
            e = e * self.dim
        return e

    def dispersal(self, which: str = "dispersal"):
        raw = self.kernels.get(which) or self.kernels.get("dispersal") or lazy_walk(self.dim)
        return make_dispersal_kernel(self.dim, raw)

    def competition(self, which: str = "competition", lambda0: float | None = None):
        raw = self.kernels.get(which)
        if raw is None:
            l0 = self.values.get("lambda0", 0.01) if lambda0 is None else lambda0
            raw = {(0,) * self.dim: l0}
        return make_competition_kernel(self.dim, raw)

    def params(self, m: float | None = None, lambda0: float | None = None) -> ModelParams:
        return ModelParams(
            m=self.values.get("m", 2.0) if m is None else m,
            p=self.dispersal(),
            lam=self.competition(lambda0=lambda0),
            extent=self.extent,
            boundary=self.values.get("boundary", "torus"),
        )


def lazy_walk(d: int) -> dict:
    """Stay with probability 1/2, else jump to one of the 2d nearest neighbours."""
    w = {(0,) * d: 0.5}
    for i in range(d):
        for s in (1, -1):
            off = [0] * d
            off[i] = s
            w[tuple(off)] = 0.25 / d
    return w


def _parse_offset(s: str, lineno: int) -> tuple[int, ...]:
    try:
        return _ints(s)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad offset {s!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration; derived constants land in ``.derived``."""
    values: dict = {}
    kernels: dict = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in KERNEL_SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            if section in kernels:
                raise ConfigError(f"line {lineno}: duplicate section [{section}]")
            kernels[section] = {}
            continue
        if section is not None and ":" in line and "=" not in line:
            off, _, w = line.partition(":")
            key = _parse_offset(off, lineno)
            if key in kernels[section]:
                raise ConfigError(f"line {lineno}: duplicate offset {key}")
            try:
                kernels[section][key] = float(w)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad weight {w.strip()!r}") from None
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = key.strip(), val.strip()
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section = None
        try:
            values[key] = KEYS[key](val)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    if "seed" not in values:
        raise ConfigError("seed required")
    declared = values.pop("experiment", None)
    exp = declared or "simulate"
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    if "competition" in kernels and "lambda0" in values:
        raise ConfigError("give either lambda0 or a [competition] section, not both")
    seed = values.pop("seed")
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    cfg = RunConfig(experiment=exp, seed=seed, values=values, kernels=kernels, declared=declared)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    d = cfg.dim
    for name, raw in cfg.kernels.items():
        for off in raw:
            if len(off) != d:
                raise ConfigError(f"[{name}] offset {off} does not have dimension {d}")
    if len(cfg.extent) != d:
        raise ConfigError(f"extent {cfg.extent} does not have dimension {d}")
    try:
        for sec in ("dispersal", "dispersal2"):
            if sec in cfg.kernels:
                make_dispersal_kernel(d, cfg.kernels[sec])
        params = cfg.params()
        for sec in ("competition11", "competition12", "competition21", "competition22"):
            if sec in cfg.kernels:
                make_competition_kernel(d, cfg.kernels[sec])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    cfg.derived = echo_constants(params, cfg.get("delta", 0.1), cfg.get("m_tilde"))


def echo_constants(params: ModelParams, delta: float = 0.1, m_tilde: float | None = None) -> dict:
    """m*, M, m_bar, m_bar0 and, where they exist, n*, eps1, eps2."""
    from .logistic import InfeasibleError, choose_epsilons

    dc = derived_constants(params)
    out = {"m_star": dc.m_star, "M": dc.M, "m_bar": dc.m_bar_kappa, "m_bar0": dc.m_bar_0}
    if params.m > 1:
        mt = default_m_tilde(params.m) if m_tilde is None else m_tilde
        try:
            out["n_star"] = colonization_horizon(params.p, mt)
            e1, e2 = choose_epsilons(params.m, delta, mt, params.p)
            out["eps1"], out["eps2"] = e1, e2
        except (HorizonCapExceeded, InfeasibleError, ValueError):
            pass
    return out


def format_echo(cfg: RunConfig) -> str:
    lines = [f"experiment = {cfg.experiment}", f"seed = {cfg.seed}"]
    lines += [f"{k} = {v!r}" for k, v in cfg.derived.items()]
    return "\n".join(lines)
