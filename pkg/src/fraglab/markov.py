"""Probabilistic representation of the normalized break points.

With Bernoulli variables ``Y[n,k] ~ B(p[n,k])``, ``nu_n ~ B(q_n)`` and
``eps_n ~ B(1 - l_{n-1}/l_n)``, the chain

    x_0 = 0,   x_n = n eps_n nu_n + (1 - eps_n) (x_{n-1} + Y[n, x_{n-1}+1])

satisfies ``alpha[n,k] = P(x_n <= k-1) = (a[n,k] - a[n,0]) / l_n``. The
exact ``alpha`` rows come from the recursion

    alpha[n,k] = shift_n + ratio_n (p[n,k] alpha[n-1,k-1] + (1-p[n,k]) alpha[n-1,k])

with ``ratio_n = l_{n-1}/l_n`` and ``shift_n = (a[n-1,0] - a[n,0]) / l_n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .partition import BoundaryPath, BoundarySpec, Evolution, SplitSpec, normalize
from .stats import (
    SUB_CHAIN,
    Report,
    RngStream,
    Verdict,
    Z_LIMIT,
    ks_statistic,
    ks_threshold,
)

MIN_REPLICATIONS = 10_000


@dataclass
class ChainParams:
    """Boundary and proportions of one (possibly random) environment, realized.

    Random boundaries and proportions are drawn once from ``seed``; the
    exact recursion and the chain simulation are then conditioned on that
    realization.
    """

    boundary: BoundarySpec
    split: SplitSpec
    horizon: int
    seed: int | None = None
    stream_id: int = 0
    evolution: Evolution = field(init=False, repr=False)

    def __post_init__(self):
        self.evolution = Evolution(self.boundary, self.split, self.horizon, self.seed, self.stream_id)

    @property
    def path(self) -> BoundaryPath:
        return self.evolution.path

    @property
    def eps_rate(self) -> np.ndarray:
        """``1 - l_{n-1}/l_n`` for ``n = 1..horizon`` (index 0 unused)."""
        rate = 1.0 - self.path.ratio
        rate[0] = 0.0
        return np.clip(rate, 0.0, 1.0)

    @property
    def nu_rate(self) -> np.ndarray:
        """``q_n`` with undefined entries (and ``n = 0``) set to the metadata ``q``."""
        q = self.path.q.copy()
        q[np.isnan(q)] = self.boundary.q
        return q

    def rows(self):
        return self.evolution.rows()

    def log_length(self) -> np.ndarray:
        """``log l_n`` relative to ``l_0``, accumulated from the ratios."""
        out = np.zeros(self.horizon + 1)
        out[1:] = -np.cumsum(np.log(self.path.ratio[1:]))
        return out


def alpha_rows(params: ChainParams, n: int | None = None):
    """Yield ``alpha[k, 0..k+1]`` for ``k = 0..n``."""
    n = params.horizon if n is None else n
    if not 0 <= n <= params.horizon:
        raise ValueError(f"n must lie in [0, {params.horizon}]")
    ratio, shift = params.path.ratio, params.path.shift
    alpha = np.array([0.0, 1.0])
    yield alpha
    for k, p in enumerate(params.rows(), start=1):
        if k > n:
            break
        if not np.isfinite(ratio[k]) or params.path.length[k] == 0:
            raise ValueError(f"degenerate interval at step {k}: l_n = 0")
        nxt = np.empty(k + 2)
        nxt[0] = 0.0
        nxt[k + 1] = 1.0
        nxt[1 : k + 1] = shift[k] + ratio[k] * (p * alpha[:-1] + (1.0 - p) * alpha[1:])
        alpha = nxt
        yield alpha


def alpha_exact(params: ChainParams, n: int | None = None) -> np.ndarray:
    """``alpha[n, 0..n+1]`` by the exact recursion (O(n^2))."""
    if params.path.length[0] <= 0:
        raise ValueError("degenerate interval at step 0: l_0 = 0")
    n = params.horizon if n is None else n
    alpha = None
    for alpha in alpha_rows(params, n):
        pass
    return alpha


def representation_gap(params: ChainParams, n: int | None = None) -> float:
    """``max_k |alpha[n,k] - (a[n,k] - a[n,0]) / l_n|`` against direct evolution."""
    n = params.horizon if n is None else n
    alpha = alpha_exact(params, n)
    bp = params.evolution.final() if n == params.horizon else list(params.evolution.steps())[n]
    atoms = normalize(bp).atoms
    return float(np.max(np.abs(alpha[1:-1] - atoms))) if n else 0.0


# ---------------------------------------------------------------------------
# simulation


@dataclass
class ChainPath:
    """Simulated chains, one row per replication.

    ``x``, ``tau`` and ``s`` are ``(R, n+1)`` trajectories when recorded,
    otherwise ``(R, 1)`` holding step ``n`` only. ``nu_tau`` is the restart
    value ``nu_{tau_n}`` at the final step.
    """

    x: np.ndarray
    tau: np.ndarray
    s: np.ndarray
    nu_tau: np.ndarray
    s_tau: np.ndarray

    @property
    def x_final(self) -> np.ndarray:
        return self.x[:, -1]

    @property
    def tau_final(self) -> np.ndarray:
        return self.tau[:, -1]


def simulate_chain(params: ChainParams, n: int, replications: int, rng: np.random.Generator,
                   record: bool = False, check_identity: bool = True) -> ChainPath:
    """Simulate ``(x_k, tau_k, s_k)`` for ``k <= n`` in ``replications`` copies.

    The identity ``x_k = tau_k nu_{tau_k} + s_k - s_{tau_k}`` is asserted
    on every path at every step when ``check_identity``.
    """
    if not 0 <= n <= params.horizon:
        raise ValueError(f"n must lie in [0, {params.horizon}]")
    R = replications
    eps_rate, nu_rate = params.eps_rate, params.nu_rate
    x = np.zeros(R, dtype=np.int64)
    s = np.zeros(R, dtype=np.int64)
    tau = np.zeros(R, dtype=np.int64)
    # restart value at tau = 0 is drawn with the metadata q
    nu_tau = (rng.random(R) <= nu_rate[0]).astype(np.int64)
    s_tau = np.zeros(R, dtype=np.int64)
    hist = [(x.copy(), tau.copy(), s.copy())] if record else None
    for k, p in enumerate(params.rows(), start=1):
        if k > n:
            break
        y = (rng.random(R) <= p[x]).astype(np.int64)
        nu = (rng.random(R) <= nu_rate[k]).astype(np.int64)
        eps = rng.random(R) <= eps_rate[k] if eps_rate[k] > 0 else np.zeros(R, dtype=bool)
        s = s + y
        x = np.where(eps, k * nu, x + y)
        tau = np.where(eps, k, tau)
        nu_tau = np.where(eps, nu, nu_tau)
        s_tau = np.where(eps, s, s_tau)
        if check_identity:
            rhs = tau * nu_tau + s - s_tau
            if not np.array_equal(x, rhs):
                bad = int(np.nonzero(x != rhs)[0][0])
                raise AssertionError(f"pathwise identity broken at step {k}, replication {bad}")
            if np.any((x < 0) | (x > k)):
                raise AssertionError(f"x_k left [0, k] at step {k}")
        if record:
            hist.append((x.copy(), tau.copy(), s.copy()))
    if record:
        xs, taus, ss = (np.stack(h, axis=1) for h in zip(*hist))
    else:
        xs, taus, ss = x[:, None], tau[:, None], s[:, None]
    return ChainPath(xs, taus, ss, nu_tau, s_tau)


def simulate_tau(params: ChainParams, n: int, replications: int, rng: np.random.Generator,
                 chunk_elems: int = 8_000_000) -> tuple[np.ndarray, np.ndarray]:
    """``(tau_n, nu_{tau_n})`` from direct Bernoulli draws of ``eps_1..eps_n``."""
    rate = params.eps_rate[1 : n + 1]
    nu_rate = params.nu_rate
    chunk = max(1, chunk_elems // max(n, 1))
    taus = np.empty(replications, dtype=np.int64)
    done = 0
    while done < replications:
        b = min(chunk, replications - done)
        if n == 0:
            taus[done : done + b] = 0
        else:
            eps = rng.random((b, n)) <= rate
            eps &= rate > 0
            rev = eps[:, ::-1]
            hit = rev.any(axis=1)
            last = n - np.argmax(rev, axis=1)
            taus[done : done + b] = np.where(hit, last, 0)
        done += b
    nu = (rng.random(replications) <= nu_rate[taus]).astype(np.int64)
    return taus, nu


# ---------------------------------------------------------------------------
# checks


def _binomial_z(est, exact, R):
    se = np.sqrt(exact * (1.0 - exact) / R)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(est - exact) / np.where(se > 0, se, 1.0),
                     np.where(np.isclose(est, exact, rtol=0.0, atol=1e-12), 0.0, np.inf))
    return z


def representation_check(params: ChainParams, n: int, replications: int, seed: int,
                         min_replications: int = MIN_REPLICATIONS) -> Report:
    """Monte Carlo ``P(x_n <= k-1)`` against the exact ``alpha[n,k]``."""
    if replications < min_replications:
        raise ValueError(f"representation_check needs at least {min_replications} replications")
    rng = RngStream(seed).generator(SUB_CHAIN)
    path = simulate_chain(params, n, replications, rng)
    x = path.x_final
    alpha = alpha_exact(params, n)
    counts = np.bincount(x, minlength=n + 1)
    est = np.concatenate([[0.0], np.cumsum(counts) / replications])  # est[k] = P(x <= k-1)
    z = _binomial_z(est, alpha, replications)
    report = Report("representation")
    report.add(Verdict(
        "representation_z", float(np.max(z)), Z_LIMIT, bool(np.max(z) < Z_LIMIT),
        n=n, replications=replications,
        details={"max_abs_deviation": float(np.max(np.abs(est - alpha)))},
    ))
    return report


def _regime_of(params: ChainParams) -> float:
    c = params.boundary.regime
    if c is None or (isinstance(c, float) and math.isnan(c)):
        raise ValueError("tau_statistics needs the regime c in the boundary metadata")
    return c


def tau_cdf_exact(params: ChainParams, n: int) -> np.ndarray:
    """``P(tau_n <= k) = l_k / l_n`` for ``k = 0..n``."""
    logl = params.log_length()[: n + 1]
    return np.exp(logl - logl[n])


def tau_statistics(params: ChainParams, n: int, replications: int, seed: int,
                   t_grid=None, min_replications: int = MIN_REPLICATIONS) -> Report:
    """Empirical laws of ``tau_n`` against their exact and limiting forms."""
    c = _regime_of(params)
    if replications < min_replications:
        raise ValueError(f"tau_statistics needs at least {min_replications} replications")
    R = replications
    rng = RngStream(seed).generator(SUB_CHAIN)
    tau, nu = simulate_tau(params, n, R, rng)
    report = Report("tau")

    exact = tau_cdf_exact(params, n)
    ks = np.arange(n + 1) if n <= 2000 else np.unique(np.linspace(0, n, 401).astype(int))
    srt = np.sort(tau)
    est = np.searchsorted(srt, ks, side="right") / R
    z = _binomial_z(est, exact[ks], R)
    report.add(Verdict("tau_closed_form_z", float(np.max(z)), Z_LIMIT, bool(np.max(z) < Z_LIMIT),
                       n=n, replications=R))

    frac = tau / n if n else np.zeros(R)
    if 0.0 < c < math.inf:
        logl = params.log_length()
        l_ratio = np.exp(logl[tau] - logl[n])
        jump = float(np.max(np.diff(exact))) if n else 1.0
        d = ks_statistic(l_ratio, lambda x: np.clip(x, 0.0, 1.0))
        thr = ks_threshold(R) + jump
        report.add(Verdict("ks_L_tau_uniform", d, thr, d < thr, n=n, replications=R,
                           details={"discreteness_allowance": jump}))

        k = np.arange(n + 1)
        # sup over t of the finite-n vs limit gap of the tau_n / n law
        bias = float(max(np.max(np.abs(exact - (k / n) ** c)),
                         np.max(np.abs(exact[:-1] - ((k[:-1] + 1) / n) ** c))))
        d = ks_statistic(frac, lambda x: np.clip(x, 0.0, 1.0) ** c)
        thr = ks_threshold(R) + bias
        report.add(Verdict("ks_tau_over_n_beta", d, thr, d < thr, n=n, replications=R,
                           details={"c": c, "finite_n_allowance": bias}))
    elif c == 0.0:
        k = int(math.floor(0.1 * n))
        mass = float(np.mean(frac <= 0.1))
        chk = _binomial_z(np.array(mass), exact[k], R)
        report.add(Verdict("tau_mass_near_zero", float(chk), Z_LIMIT, bool(chk < Z_LIMIT), n=n,
                           replications=R, details={"mass": mass, "exact": float(exact[k])}))
    else:
        k = int(math.floor(0.9 * n))
        mass = float(np.mean(frac > 0.9))
        target = 1.0 - float(exact[k])
        chk = _binomial_z(np.array(mass), target, R)
        report.add(Verdict("tau_mass_near_one", float(chk), Z_LIMIT, bool(chk < Z_LIMIT), n=n,
                           replications=R, details={"mass": mass, "exact": target}))

    q = params.boundary.q
    grid = np.linspace(0.05, 1.0, 20) if t_grid is None else np.asarray(t_grid, dtype=float)
    worst = 0.0
    for t in grid:
        below = frac <= t
        pb = below.mean()
        for xv, px in ((0, 1.0 - q), (1, q)):
            joint = np.mean(below & (nu == xv))
            worst = max(worst, abs(joint - pb * px))
    thr = Z_LIMIT * 0.5 / math.sqrt(R)
    report.add(Verdict("tau_nu_independence", worst, thr, worst < thr, n=n, replications=R))
    return report
