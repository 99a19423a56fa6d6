"""One-dimensional logistic machinery.

The single-site map x -> x (m - shift - scale x)^+ drives everything else in
the package: its fixed points set the equilibria, its unimodality makes
interval images exact, and shrinking interval sequences for it certify local
convergence of the lattice dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import (
    DispersalKernel,
    ModelParams,
    colonization_horizon,
    s_weights,
)

SAFETY = 0.95


class ConstructionError(RuntimeError):
    """An interval-sequence construction failed its own verification."""


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class LogisticMap:
    m: float
    shift: float = 0.0
    scale: float = 1.0

    def __call__(self, x):
        if isinstance(x, (float, int)):
            return x * max(self.m - self.shift - self.scale * x, 0.0)
        r = x * np.maximum(self.m - self.shift - self.scale * np.asarray(x, dtype=float), 0.0)
        return float(r) if np.ndim(r) == 0 else r

    @property
    def vertex(self) -> float:
        return (self.m - self.shift) / (2 * self.scale)

    @property
    def maximum(self) -> float:
        return (self.m - self.shift) ** 2 / (4 * self.scale)

    def upper_preimage(self, y: float) -> float:
        """Larger root of map(x) = y, for 0 <= y <= maximum."""
        a = self.m - self.shift
        disc = max(a * a / 4 - self.scale * y, 0.0)
        return (a / 2 + math.sqrt(disc)) / self.scale


def eval_map(phi: LogisticMap, x):
    return phi(x)


def fixed_points(phi: LogisticMap) -> tuple[float, float | None]:
    """(0, positive fixed point); the second entry is None when m - shift <= 1."""
    r = phi.m - phi.shift
    if r <= 1:
        return 0.0, None
    return 0.0, (r - 1) / phi.scale


def image_of_interval(phi: LogisticMap, a: float, b: float) -> tuple[float, float]:
    """Exact image of [a, b] under a unimodal map: endpoints plus the vertex."""
    if not 0 <= a <= b:
        raise ValueError(f"need 0 <= a <= b, got [{a}, {b}]")
    fa, fb = phi(a), phi(b)
    lo = min(fa, fb)
    hi = max(fa, fb)
    if a <= phi.vertex <= b:
        hi = max(hi, phi(phi.vertex))
    return lo, hi


# --- shrinking interval sequences ------------------------------------------


@dataclass
class IntervalSequencePair:
    alphas: list[float]
    betas: list[float]
    gamma: float
    N0: int
    m: float
    eps: float
    case: int
    crossover: int | None = None
    attempts: int = 1
    limits: tuple[float, float] = field(default=(math.nan, math.nan))

    def interval(self, n: int) -> tuple[float, float]:
        return self.alphas[n], self.betas[n]


def _verify(m: float, gamma: float, alphas, betas, upto: int) -> str | None:
    """Return a description of the first violated property, or None."""
    f = LogisticMap(m)
    fg = LogisticMap(m, gamma)
    m_bar, m_bar_g = m - 1, m - 1 - gamma
    for n in range(upto + 1):
        a0, a1, b0, b1 = alphas[n], alphas[n + 1], betas[n], betas[n + 1]
        if not (a0 < a1 < m_bar_g <= m_bar < b1 < b0):
            return f"ordering fails at n={n}"
        for phi in (fg, f):
            lo, hi = image_of_interval(phi, a0, b0)
            if not (a1 < lo and hi < b1):
                return f"containment fails at n={n}"
    return None


def _grow(alphas, betas, step, m, eps, max_len):
    """Extend both sequences with ``step`` until they enter the eps-band around m - 1."""
    m_bar = m - 1
    while len(alphas) < max_len:
        n = len(alphas) - 1
        if alphas[n] >= m_bar - eps and betas[n] <= m_bar + eps:
            # N0 found; one more term so the containment at N0 can be checked.
            a, b = step(alphas[n], betas[n], n)
            alphas.append(a)
            betas.append(b)
            return n
        a, b = step(alphas[n], betas[n], n)
        if not (a > alphas[n] and b < betas[n]):
            # stalled or non-monotone: this gamma cannot satisfy the ordering
            return None
        alphas.append(a)
        betas.append(b)
    return None


def _case_low(m, eps, gamma, alpha0, max_len):
    f, fg = LogisticMap(m), LogisticMap(m, gamma)
    m_star = m * m / 4
    beta0 = (m - gamma) - alpha0  # f_gamma(beta0) = f_gamma(alpha0)
    alphas, betas = [alpha0], [beta0]

    def step(a, b, n):
        a_next = (a + fg(a)) / 2
        b_next = (m_star + m / 2) / 2 if n == 0 else (f(b) + b) / 2
        return a_next, b_next

    return alphas, betas, _grow(alphas, betas, step, m, eps, max_len), None


def _case_two(m, eps, gamma, alpha0, max_len):
    fg = LogisticMap(m, gamma)
    alpha0 = min(alpha0, gamma / 2)
    alphas, betas = [alpha0], [fg.upper_preimage(fg(alpha0))]

    def step(a, b, n):
        a_next = (fg(a) + a) / 2
        return a_next, fg.upper_preimage(fg(a_next))

    return alphas, betas, _grow(alphas, betas, step, m, eps, max_len), None


def _case_high(m, eps, gamma, alpha0, max_len):
    f, fg = LogisticMap(m), LogisticMap(m, gamma)
    m_star = m * m / 4
    alpha0 = min(alpha0, (m - gamma) / 4)
    alphas = [alpha0]
    while (alphas[-1] + fg(alphas[-1])) / 2 <= m / 2:
        alphas.append((alphas[-1] + fg(alphas[-1])) / 2)
        if len(alphas) > max_len:
            return alphas, alphas, None, None
    n0 = len(alphas) - 1
    a = alphas[n0]
    alphas.append(min((a + fg(a)) / 2, (m / 2 + fg(m_star)) / 2))
    # beta_i strictly between m* and the upper preimage of alpha_{i+1}
    betas = [(m_star + fg.upper_preimage(alphas[i + 1])) / 2 for i in range(n0 + 1)]
    betas.append((betas[n0] + m_star) / 2)

    def step(a, b, n):
        return (fg(b) + a) / 2, (b + f(a)) / 2

    m_bar = m - 1
    n = len(alphas) - 1
    if alphas[n] >= m_bar - eps and betas[n] <= m_bar + eps:
        a_next, b_next = step(alphas[n], betas[n], n)
        alphas.append(a_next)
        betas.append(b_next)
        return alphas, betas, n, n0
    return alphas, betas, _grow(alphas, betas, step, m, eps, max_len), n0


def lemma12_sequences(
    m: float,
    eps: float,
    alpha0: float | None = None,
    max_attempts: int = 40,
    max_len: int = 200_000,
) -> IntervalSequencePair:
    """Monotone interval sequences shrinking onto m - 1 for f and its shifted version.

    Works in the normalized scale (lambda = 1).  Returns sequences
    alpha_0 < alpha_1 < ... and beta_0 > beta_1 > ... of length N0 + 2 such
    that for every n <= N0 the images of [alpha_n, beta_n] under f and
    f_gamma lie in the open interval (alpha_{n+1}, beta_{n+1}), and both
    alpha_N0 and beta_N0 are within eps of m - 1.

    The three slope regimes of f at its fixed point (m < 2, m == 2, m > 2)
    use different constructions.  gamma starts at half the admissible slack
    and is halved until the verification passes.
    """
    if not 1 < m < 3:
        raise ValueError(f"m must lie in (1, 3), got {m}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    m_bar = m - 1
    if alpha0 is None:
        alpha0 = min(eps, m_bar / 10)
    if m < 2:
        case, builder = 1, _case_low
        slack = m - 1
    elif m == 2:
        case, builder = 2, _case_two
        slack = eps
    else:
        case, builder = 3, _case_high
        m_star = m * m / 4
        f_mstar = m_star * (m - m_star)
        slack = min(m - 2, (f_mstar - m / 2) / m_star, 3 - m)
        if slack <= 0:
            raise ConstructionError(f"no admissible gamma for m={m}")
    gamma = 0.5 * min(eps, slack)
    last = "not attempted"
    for attempt in range(1, max_attempts + 1):
        a0 = min(alpha0, 0.5 * (m_bar - gamma))
        alphas, betas, n_zero, crossover = builder(m, eps, gamma, a0, max_len)
        if n_zero is None:
            last = "sequences did not enter the eps-band"
        else:
            if case == 3:
                fg = LogisticMap(m, gamma)
                if not fg(m * m / 4) > m / 2 or not m_bar - gamma > fg(m * m / 4):
                    last = "gamma violates the case constraints"
                    gamma /= 2
                    continue
            last = _verify(m, gamma, alphas, betas, n_zero)
            if last is None:
                return IntervalSequencePair(
                    alphas=alphas,
                    betas=betas,
                    gamma=gamma,
                    N0=n_zero,
                    m=m,
                    eps=eps,
                    case=case,
                    crossover=crossover,
                    attempts=attempt,
                    limits=(alphas[-1], betas[-1]),
                )
        gamma /= 2
    raise ConstructionError(f"interval construction failed for m={m}, eps={eps}: {last}")


# --- occupancy constants ------------------------------------------------------


def eps2_bound(m: float, delta: float, m_tilde: float) -> float:
    """Largest eps2 allowed by both inequalities tying eps2 to m, delta and m_tilde."""
    first = (1 - m_tilde / (m * (1 - delta))) * (m - 1) / m
    second = (1 - m / 4) / 2
    return min(first, second)


def choose_epsilons(
    m: float, delta: float, m_tilde: float, p: DispersalKernel
) -> tuple[float, float]:
    """Occupancy constants (eps1, eps2) for the colonization argument.

    eps2 is 0.95 of the largest value with
    m(1-delta)(1 - eps2 m/(m-1)) >= m_tilde and m*/M <= 1 - 2 eps2;
    eps1 is 0.95 of the largest value with
    p^n_{0y} m_tilde^n eps1 <= eps2 (m+1)/m over the space-time set S.
    """
    if not 1 < m < 4:
        raise InfeasibleError(f"m must lie in (1, 4), got {m}")
    if not m * (1 - delta) > m_tilde > 1:
        raise InfeasibleError("need m(1 - delta) > m_tilde > 1")
    bound = eps2_bound(m, delta, m_tilde)
    if bound <= 0:
        raise InfeasibleError(f"no feasible eps2 for m={m}, delta={delta}")
    eps2 = SAFETY * bound
    n_star = colonization_horizon(p, m_tilde)
    peak = max(s_weights(p, n_star, m_tilde).values())
    eps1 = SAFETY * eps2 * (m + 1) / m / peak
    return min(eps1, SAFETY), eps2


# --- contraction near the fixed point -----------------------------------------


@dataclass(frozen=True)
class ContractionReport:
    grad_sup: float
    diag_sup: float
    analytic_bound: float
    eps: float
    contraction_ok: bool

    def __iter__(self):
        return iter((self.grad_sup, self.contraction_ok))


def gradient(params_or_m, kappa_ratio: float, gamma_weights, u_x: float, u_nbrs) -> np.ndarray:
    """Analytic gradient of the normalized site map u -> u_x (m - u_x - k sum gamma u)."""
    m = params_or_m.m if isinstance(params_or_m, ModelParams) else float(params_or_m)
    g = np.asarray(gamma_weights, dtype=float)
    s = float(g @ np.asarray(u_nbrs, dtype=float)) if len(g) else 0.0
    return np.concatenate([[m - 2 * u_x - kappa_ratio * s], -kappa_ratio * g * u_x])


def site_map(m: float, kappa_ratio: float, gamma_weights, u_x: float, u_nbrs) -> float:
    g = np.asarray(gamma_weights, dtype=float)
    s = float(g @ np.asarray(u_nbrs, dtype=float)) if len(g) else 0.0
    return u_x * max(m - u_x - kappa_ratio * s, 0.0)


def contraction_bound(params: ModelParams, delta: float) -> ContractionReport:
    """Supremum of the l1 gradient norm of the site map over the box around m - 1.

    Works in the normalized scale u = lambda0 * zeta, where the gradient is
    the same dimensionless quantity.  The sup of |m - 2u_x - k S| + k u_x over
    u_x, S in [m-1-delta, m-1+delta] is attained at a corner.  ``eps`` is the
    slack 1 - (|m-2| + 2 delta + k (delta + m - 1)); the map contracts when
    eps > 0 and the gradient sup is below 1 - eps/2.
    """
    m = params.m
    k = params.kappa / params.lambda0
    lo, hi = m - 1 - delta, m - 1 + delta
    if lo <= 0:
        raise ValueError("box reaches zero mass")
    if m - hi - k * hi <= 0:
        raise ValueError("box leaves the region where the offspring bracket is positive")
    corners = [(ux, s) for ux in (lo, hi) for s in (lo, hi)]
    diag = max(abs(m - 2 * ux - k * s) for ux, s in corners)
    grad = max(abs(m - 2 * ux - k * s) + k * ux for ux, s in corners)
    bound = abs(m - 2) + (m - 1) * k + 2 * delta + k * delta
    eps = 1 - (abs(m - 2) + 2 * delta + k * (delta + m - 1))
    ok = eps > 0 and grad < 1 - eps / 2
    return ContractionReport(grad_sup=grad, diag_sup=diag, analytic_bound=bound, eps=eps, contraction_ok=ok)


@dataclass(frozen=True)
class ContractionConstants:
    eps: float
    delta: float
    kappa_star: float


def contraction_constants(m: float, delta: float | None = None, norm: str = "l1", grid: int = 999) -> ContractionConstants:
    """Largest kappa* (as a multiple of lambda0) admitted by the contraction conditions.

    With A(kappa) = |m-2| + 2 delta + kappa (delta + m - 1):

    ``norm="l2"``:  A(kappa*)^2 < 1 - eps and
                    kappa* < min(delta/(m-1), sqrt(eps)/(sqrt(2)(2+delta))),
                    giving a squared l2 gradient norm below 1 - eps/2;
    ``norm="l1"``:  A(kappa*) < 1 - eps and
                    kappa* < min(delta/(m-1), eps/(2(2+delta))),
                    giving an l1 gradient norm below 1 - eps/2.

    eps is scanned on a fixed grid and the value giving the largest kappa*
    kept; the result carries the 0.95 safety factor.
    """
    if not 1 < m < 3:
        raise ValueError("m must lie in (1, 3)")
    if norm not in ("l1", "l2"):
        raise ValueError("norm must be 'l1' or 'l2'")
    if delta is None:
        delta = (1 - abs(m - 2)) / 4
    best = (0.0, math.nan)
    for i in range(1, grid + 1):
        e = i / (grid + 1)
        if norm == "l2":
            room = math.sqrt(1 - e) - abs(m - 2) - 2 * delta
            cross = math.sqrt(e) / (math.sqrt(2) * (2 + delta))
        else:
            room = 1 - e - abs(m - 2) - 2 * delta
            cross = e / (2 * (2 + delta))
        if room <= 0:
            continue
        ks = min(delta / (m - 1), cross, room / (delta + m - 1))
        if ks > best[0]:
            best = (ks, e)
    if best[0] <= 0:
        raise InfeasibleError(f"no contraction constants for m={m}, delta={delta}")
    return ContractionConstants(eps=best[1], delta=delta, kappa_star=SAFETY * best[0])


def sandwich_maps(params: ModelParams) -> tuple[LogisticMap, LogisticMap]:
    """Lower and upper single-site maps bounding the site map with neighbor competition.

    Normalized scale: lower z(m - m k - z)^+, upper z(m - z)^+, k = kappa/lambda0.
    """
    k = params.kappa / params.lambda0
    if params.m * k >= params.m - 1:
        raise InfeasibleError("m*kappa >= m - 1: lower map has no positive fixed point")
    return LogisticMap(params.m, shift=params.m * k), LogisticMap(params.m)
