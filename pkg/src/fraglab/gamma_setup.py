"""Fully random uniform fragmentation between Poisson-arrival boundaries.

The end points are ``A[n,0] = -S'_n`` and ``A[n,n+1] = S_n`` with
``S_n = E_0 + ... + E_n`` and ``S'_n = E'_0 + ... + E'_n`` built from two
independent unit-exponential streams, and every proportion is an
independent uniform. At every step the spacings ``I[n,k] = A[n,k+1] - A[n,k]``
are i.i.d. Gamma(2), so the normalized points are distributed as the
even order statistics ``U_(2), U_(4), ..., U_(2n)`` of ``2n+1`` uniforms and

    Z_n(t) = sqrt(2n + 1) (G_n[0, t] - t)

is close to a Brownian bridge.

The hot loop is a numba kernel that reads uniforms from the same
``Generator`` in the same order as :meth:`Evolution.rows`, so a replication
here is bit-identical to the generic evolution with
``BoundarySpec.poisson()`` and ``SplitSpec.fully_random()``.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import betainc

from .partition import BoundarySpec, BreakPoints, Evolution, SplitSpec
from .stats import (
    SUB_BOUNDARY,
    SUB_EXTRA,
    SUB_SPLIT,
    Gamma2,
    Report,
    RngStream,
    Verdict,
    cov_check,
    ks_one_sample,
    ks_two_sample,
    mean_check,
    var_check,
)

MIN_POOLED = 10_000
MIN_REPLICATIONS = 10_000
DEFAULT_T_GRID = (0.25, 0.5, 0.75)


def thread_count() -> int:
    """Worker cap from ``FRAGLAB_THREADS`` (default: all cores)."""
    raw = os.environ.get("FRAGLAB_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"FRAGLAB_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ValueError(f"FRAGLAB_THREADS must be a positive integer, got {raw!r}")
    return k


# ---------------------------------------------------------------------------
# kernel


@numba.njit(nogil=True, cache=True)
def _evolve_kernel(a, left, right, rng, row):
    """Evolve ``a`` (length n+2, holding step 0 in ``a[:2]``) up to step n in place."""
    n = a.shape[0] - 2
    for k in range(1, n + 1):
        for j in range(k):
            row[j] = rng.random()
        # right to left so that a[j-1] still holds step k-1
        a[k] = row[k - 1] * a[k - 1] + (1.0 - row[k - 1]) * a[k]
        for j in range(k - 1, 0, -1):
            a[j] = row[j - 1] * a[j - 1] + (1.0 - row[j - 1]) * a[j]
        a[0] = left[k]
        a[k + 1] = right[k]


@dataclass(frozen=True)
class GammaSetupState:
    n: int
    points: BreakPoints

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.points.points)

    @property
    def alpha(self) -> np.ndarray:
        a = self.points.points
        return (a[1:-1] - a[0]) / (a[-1] - a[0])

    def interior(self) -> np.ndarray:
        return self.points.interior


def _boundary(n: int, stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
    path = BoundarySpec.poisson().realize(n, stream.generator(SUB_BOUNDARY))
    return path.left, path.right


def run_gamma_setup(n: int, seed: int, stream_id: int = 0) -> GammaSetupState:
    """One replication up to step ``n``; a pure function of ``(n, seed, stream_id)``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    stream = RngStream(seed, stream_id)
    left, right = _boundary(n, stream)
    a = np.empty(n + 2)
    a[0], a[1] = left[0], right[0]
    _evolve_kernel(a, left, right, stream.generator(SUB_SPLIT), np.empty(max(n, 1)))
    return GammaSetupState(n, BreakPoints(n, a))


def reference_evolution(n: int, seed: int, stream_id: int = 0) -> Evolution:
    """The same replication through the generic evolution (for cross-checks)."""
    return Evolution(BoundarySpec.poisson(), SplitSpec.fully_random(), n, seed, stream_id)


def spacing_recursion_gap(n: int, seed: int, stream_id: int = 0) -> float:
    """Largest violation of the pathwise spacing update over steps ``0..n-1``.

    ``I[m+1,k] = (1 - P[m+1,k+1]) I[m,k] + P[m+1,k] I[m,k-1]`` in the
    interior, with ``I[m+1,0] = (1 - P[m+1,1]) I[m,0] + E'_{m+1}`` and
    ``I[m+1,m+1] = E_{m+1} + P[m+1,m+1] I[m,m]`` at the ends.
    """
    ev = reference_evolution(n, seed, stream_id)
    e = np.diff(ev.path.right)
    e_prime = -np.diff(ev.path.left)
    worst = 0.0
    prev = None
    for bp, row in zip(ev.steps(), [None, *ev.rows()]):
        cur = np.diff(bp.points)
        if prev is not None:
            m = bp.n - 1
            p = row  # p[m+1, 1..m+1]
            pred = np.empty(m + 2)
            pred[0] = (1.0 - p[0]) * prev[0] + e_prime[m]
            pred[m + 1] = e[m] + p[m] * prev[m]
            pred[1 : m + 1] = (1.0 - p[1:]) * prev[1:] + p[:-1] * prev[:-1]
            scale = max(1.0, float(np.max(np.abs(bp.points))))
            worst = max(worst, float(np.max(np.abs(pred - cur))) / scale)
        prev = cur
    return worst


# ---------------------------------------------------------------------------
# replication batches


@dataclass
class GammaBatch:
    """Per-replication summaries of ``R`` independent runs at step ``n``."""

    n: int
    replications: int
    seed: int
    t_grid: np.ndarray
    cdf_at_t: np.ndarray          # (R, len(t_grid)) values of G_n[0, t]
    alpha_sel: np.ndarray         # (R, 3) alpha at k = 1, ceil(n/2), n
    spacings: np.ndarray | None   # (R, n+1) when kept
    bounds: np.ndarray            # (R, 2) end points A[n,0], A[n,n+1]

    @property
    def selected_k(self) -> tuple[int, int, int]:
        return selected_indices(self.n)

    @property
    def z(self) -> np.ndarray:
        return math.sqrt(2 * self.n + 1) * (self.cdf_at_t - self.t_grid)


def selected_indices(n: int) -> tuple[int, int, int]:
    return 1, max(1, math.ceil(n / 2)), n


def run_batch(n: int, replications: int, seed: int, t_grid=DEFAULT_T_GRID,
              keep_spacings: bool = False, threads: int | None = None) -> GammaBatch:
    """``R`` replications with streams ``(seed, 0..R-1)``; independent of ``threads``."""
    if n < 1:
        raise ValueError("run_batch needs n >= 1")
    t_grid = np.asarray(t_grid, dtype=float)
    R = replications
    cdf_at_t = np.empty((R, t_grid.size))
    alpha_sel = np.empty((R, 3))
    bounds = np.empty((R, 2))
    spac = np.empty((R, n + 1)) if keep_spacings else None
    ks = np.array(selected_indices(n)) - 1

    def work(lo: int, hi: int) -> None:
        a = np.empty(n + 2)
        row = np.empty(n)
        for r in range(lo, hi):
            stream = RngStream(seed, r)
            left, right = _boundary(n, stream)
            a[0], a[1] = left[0], right[0]
            _evolve_kernel(a, left, right, stream.generator(SUB_SPLIT), row)
            alpha = (a[1:-1] - a[0]) / (a[-1] - a[0])
            cdf_at_t[r] = np.searchsorted(alpha, t_grid, side="right") / n
            alpha_sel[r] = alpha[ks]
            bounds[r] = a[0], a[-1]
            if spac is not None:
                spac[r] = np.diff(a)

    k = max(1, min(threads or thread_count(), R))
    if k == 1:
        work(0, R)
    else:
        edges = np.linspace(0, R, k + 1).astype(int)
        with ThreadPoolExecutor(max_workers=k) as pool:
            for f in [pool.submit(work, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]:
                f.result()
    return GammaBatch(n, R, seed, t_grid, cdf_at_t, alpha_sel, spac, bounds)


# ---------------------------------------------------------------------------
# checks


def spacing_gamma_test(n: int, replications: int, seed: int, batch: GammaBatch | None = None) -> Report:
    """Pooled spacings against Gamma(2): KS, mean, variance, lag-1 autocorrelation."""
    R = replications
    if R * (n + 1) < MIN_POOLED:
        raise ValueError(f"spacing_gamma_test needs R (n+1) >= {MIN_POOLED}, got {R * (n + 1)}")
    if batch is None or batch.spacings is None:
        batch = run_batch(n, R, seed, keep_spacings=True)
    sp = batch.spacings
    pooled = sp.ravel()
    report = Report("gamma_spacings")
    ks = ks_one_sample(pooled, Gamma2())
    report.add(Verdict("ks_spacings_gamma2", ks.statistic, ks.threshold, ks.passed, n=n, replications=R,
                       details={"pooled": pooled.size}))
    report.add(mean_check(pooled, 2.0).verdict("spacing_mean_z", n=n, replications=R))
    report.add(var_check(pooled, 2.0).verdict("spacing_var_z", n=n, replications=R))
    # lag-1 correlation within replications, centred at the known mean
    d = sp - 2.0
    rho = float(np.sum(d[:, :-1] * d[:, 1:]) / np.sum(d * d) * (sp.size / (R * n)))
    thr = 4.0 / math.sqrt(R * n)
    report.add(Verdict("spacing_lag1_autocorr", abs(rho), thr, abs(rho) < thr, n=n, replications=R,
                       details={"rho": rho}))
    return report


def _beta_cdf(a: float, b: float):
    return lambda x: betainc(a, b, np.clip(x, 0.0, 1.0))


def order_statistics_check(n: int, replications: int, seed: int, batch: GammaBatch | None = None,
                           min_replications: int = MIN_REPLICATIONS) -> Report:
    """``alpha[n,k]`` against ``U_(2k)`` of ``2n+1`` uniforms at ``k = 1, ceil(n/2), n``."""
    R = replications
    if R < min_replications:
        raise ValueError(f"order_statistics_check needs R >= {min_replications}")
    if batch is None:
        batch = run_batch(n, R, seed)
    rng = RngStream(seed).generator(SUB_EXTRA)
    ks = selected_indices(n)
    ranks = [2 * k - 1 for k in ks]  # zero-based U_(2k)
    sims = np.empty((R, 3))
    chunk = max(1, 4_000_000 // (2 * n + 1))
    for lo in range(0, R, chunk):
        hi = min(R, lo + chunk)
        u = rng.random((hi - lo, 2 * n + 1))
        u.partition(ranks, axis=1)
        sims[lo:hi] = u[:, ranks]
    report = Report("order_statistics")
    for j, k in enumerate(ks):
        two = ks_two_sample(batch.alpha_sel[:, j], sims[:, j])
        report.add(Verdict(f"ks2_alpha_{k}_vs_U_{2 * k}", two.statistic, two.threshold, two.passed,
                           n=n, replications=R, details={"k": k}))
        one = ks_one_sample(batch.alpha_sel[:, j], _beta_cdf(2 * k, 2 * (n + 1 - k)))
        report.add(Verdict(f"ks_alpha_{k}_beta", one.statistic, one.threshold, one.passed,
                           n=n, replications=R, details={"a": 2 * k, "b": 2 * (n + 1 - k)}))
        report.add(mean_check(batch.alpha_sel[:, j], k / (n + 1)).verdict(f"alpha_{k}_mean_z", n=n,
                                                                          replications=R))
    return report


def fluctuation_test(n: int, t_grid, replications: int, seed: int, batch: GammaBatch | None = None,
                     min_replications: int = MIN_REPLICATIONS) -> Report:
    """Mean, variance and covariances of ``Z_n(t)`` against the Brownian bridge."""
    R = replications
    t_grid = np.asarray(t_grid, dtype=float)
    if R < min_replications:
        raise ValueError(f"fluctuation_test needs R >= {min_replications}")
    if np.any((t_grid <= 0.0) | (t_grid >= 1.0)):
        raise ValueError("fluctuation_test: t_grid must lie in (0, 1)")
    if batch is None or not np.array_equal(batch.t_grid, t_grid):
        batch = run_batch(n, R, seed, t_grid=t_grid)
    z = batch.z
    report = Report("fluctuations")
    for i, t in enumerate(t_grid):
        report.add(mean_check(z[:, i], 0.0).verdict(f"z_mean_t{t:g}", n=n, replications=R))
        report.add(var_check(z[:, i], t * (1.0 - t)).verdict(f"z_var_t{t:g}", n=n, replications=R))
    for i, s in enumerate(t_grid):
        for j in range(i + 1, t_grid.size):
            t = t_grid[j]
            lo, hi = min(s, t), max(s, t)
            report.add(cov_check(z[:, i], z[:, j], lo * (1.0 - hi)).verdict(
                f"z_cov_s{lo:g}_t{hi:g}", n=n, replications=R))
    report.notes.append("variance and covariance standard errors are plug-in fourth-moment estimates")
    return report


def uniform_limit_check(n: int, runs: int, seed: int, ks_max: float = 0.02,
                        min_fraction: float = 0.95) -> Report:
    """Fraction of runs whose ``KS(G_n, uniform)`` is below ``ks_max``."""
    good = 0
    worst = 0.0
    for r in range(runs):
        alpha = run_gamma_setup(n, seed, r).alpha
        i = np.arange(1, n + 1)
        d = float(max(np.max(i / n - alpha), np.max(alpha - (i - 1) / n)))
        worst = max(worst, d)
        good += d < ks_max
    frac = good / runs
    report = Report("uniform_limit")
    report.add(Verdict("uniform_limit_fraction", frac, min_fraction, frac >= min_fraction, n=n,
                       replications=runs, details={"ks_max": ks_max, "worst": worst}))
    return report


def window_intensity_check(n: int, w: float, replications: int, seed: int) -> Report:
    """Mean number of interior points in ``[-w, w]`` against ``w`` (intensity 1/2)."""
    counts = np.empty(replications)
    for r in range(replications):
        pts = run_gamma_setup(n, seed, r).interior()
        counts[r] = np.count_nonzero((pts >= -w) & (pts <= w))
    report = Report("window_intensity")
    report.add(mean_check(counts, w).verdict("window_count_mean_z", n=n, replications=replications))
    return report


# ---------------------------------------------------------------------------
# CSV


def write_points_csv(path, states) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "n", "k", "A"])
        for rep, st in enumerate(states):
            for k, a in enumerate(st.points.points):
                w.writerow([rep, st.n, k, repr(float(a))])


def write_fluctuations_csv(path, batch: GammaBatch) -> None:
    z = batch.z
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "t", "Z"])
        for rep in range(batch.replications):
            for i, t in enumerate(batch.t_grid):
                w.writerow([rep, repr(float(t)), repr(float(z[rep, i]))])
