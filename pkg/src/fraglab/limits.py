"""Limit laws of the normalized empirical measures.

For a growth regime ``0 < c < inf`` the weak limit is

    pbar * Beta(1, 1/c) on (0, 1-q)  +  (1 - pbar) * Beta(1/c, 1) on (1-q, 1)

whose CDF is a pair of closed-form powers. Slow growth (``c = 0``) gives
``pbar d_0 + (1 - pbar) d_1`` and fast growth gives ``d_{1-q}``. Scaled
betas on a degenerate interval collapse to a Dirac mass.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .markov import ChainParams, alpha_exact
from .partition import BoundarySpec, EmpiricalMeasure, SplitSpec
from .stats import BetaPow, Dirac, Mixture, Report, Verdict, ks_statistic

REGIMES = ("regular", "slow", "fast")

# concentration schedule for the Dirac-limit regimes
SLOW_EDGE = 0.05
SLOW_MIN_MASS = 0.95
FAST_MEDIAN_TOL = 0.05
FAST_MAX_IQR = 0.1
REGULAR_KS_MAX = 0.05


@dataclass(frozen=True)
class LimitLaw:
    regime: str
    c: float = 1.0
    q: float = 0.5
    pbar: float = 0.5

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if not 0.0 <= self.pbar <= 1.0:
            raise ValueError("pbar must lie in [0, 1]")
        if self.regime == "regular" and not 0.0 < self.c < math.inf:
            raise ValueError("regular regime needs 0 < c < inf")

    @classmethod
    def for_regime(cls, c: float, q: float, pbar: float) -> "LimitLaw":
        if c == 0.0:
            return cls("slow", c=0.0, q=q, pbar=pbar)
        if c == math.inf:
            return cls("fast", c=math.inf, q=q, pbar=pbar)
        return cls("regular", c=c, q=q, pbar=pbar)

    @property
    def is_dirac(self) -> bool:
        return self.regime != "regular"

    def components(self) -> Mixture:
        """The law as a mixture of scaled power betas and atoms."""
        if self.regime == "slow":
            return Mixture((Dirac(0.0), Dirac(1.0)), (self.pbar, 1.0 - self.pbar))
        if self.regime == "fast":
            return Mixture((Dirac(1.0 - self.q),), (1.0,))
        w = 1.0 - self.q
        return Mixture(
            (BetaPow(1.0 / self.c, 0.0, w, kind="1b"), BetaPow(1.0 / self.c, w, 1.0, kind="a1")),
            (self.pbar, 1.0 - self.pbar),
        )


def limit_cdf(law: LimitLaw, t):
    """Right-continuous CDF of ``law`` at ``t`` in ``[0, 1]``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0.0) | (t_arr > 1.0)) or np.any(np.isnan(t_arr)):
        raise ValueError("limit_cdf: t must lie in [0, 1]")
    pbar, q = law.pbar, law.q
    w = 1.0 - q
    if law.regime == "slow":
        out = pbar * (t_arr >= 0.0) + (1.0 - pbar) * (t_arr >= 1.0)
    elif law.regime == "fast":
        out = (t_arr >= w).astype(float)
    else:
        inv_c = 1.0 / law.c
        gap = w - t_arr  # computed once; both branches measure distance from 1-q
        if w > 0.0:
            left = np.where(gap > 0.0, 1.0 - (np.maximum(gap, 0.0) / w) ** inv_c, 1.0)
        else:
            left = np.ones_like(t_arr)
        if q > 0.0:
            right = np.where(gap < 0.0, (np.maximum(-gap, 0.0) / q) ** inv_c, 0.0)
        else:
            right = (t_arr >= 1.0).astype(float)
        out = pbar * left + (1.0 - pbar) * right
        # 1 - q can round to 1 for tiny q; the CDF is 1 at the right end regardless
        out = np.where(t_arr >= 1.0, 1.0, out)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# x_n / n limit and its quantile


def xn_limit_cdf(c: float, q: float, pbar: float, y):
    """CDF of ``(1-q) Beta(1,c) on (0,pbar) + q Beta(c,1) on (pbar,1)``."""
    y = np.asarray(y, dtype=float)
    left = np.where(y < pbar, 1.0 - np.clip(1.0 - y / pbar, 0.0, 1.0) ** c, 1.0)
    right = np.where(y > pbar, np.clip((y - pbar) / (1.0 - pbar), 0.0, 1.0) ** c, 0.0)
    return (1.0 - q) * left + q * right


def xn_limit_quantile(c: float, q: float, pbar: float, t, iterations: int = 64):
    """Right-continuous quantile ``inf{y : F(y) > t}`` by vectorized bisection.

    The residual is written per mixture branch relative to the branch
    junction ``F(pbar) = 1 - q`` so that flat stretches of ``F`` near the
    junction do not swamp the root in cancellation.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    w = 1.0 - q
    gap = w - t
    on_left = gap >= 0.0
    lo = np.where(on_left, 0.0, pbar)
    hi = np.where(on_left, pbar, 1.0)

    def residual(y):
        # increasing in y on each branch; the root is the quantile
        r_left = np.abs(gap) - w * np.clip(1.0 - y / pbar, 0.0, 1.0) ** c
        r_right = q * np.clip((y - pbar) / (1.0 - pbar), 0.0, 1.0) ** c - np.abs(gap)
        return np.where(on_left, r_left, r_right)

    # bracket width after 64 halvings is below 1e-19
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        pos = residual(mid) > 0.0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuantileGap:
    max_gap: float
    argmax_t: float


def quantile_consistency(c: float, q: float, pbar: float, grid=None) -> QuantileGap:
    """Compare the numerically inverted ``x_n/n`` limit with :func:`limit_cdf`.

    Returns ``sup_t |Q(t) - G(t)|`` where ``Q`` is the right-continuous
    quantile of the ``x_n / n`` limit and ``G`` the closed-form CDF of the
    stated empirical-measure limit.
    """
    if not (0.0 < c < math.inf and 0.0 < q < 1.0 and 0.0 < pbar < 1.0):
        raise ValueError("quantile_consistency needs 0 < c < inf, 0 < q < 1, 0 < pbar < 1")
    grid = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid, dtype=float)
    law = LimitLaw("regular", c, q, pbar)
    quant = xn_limit_quantile(c, q, pbar, grid)
    stated = limit_cdf(law, grid)
    diff = np.abs(quant - stated)
    i = int(np.argmax(diff))
    return QuantileGap(float(diff[i]), float(grid[i]))


# ---------------------------------------------------------------------------
# empirical vs limit


def ks_against_limit(measure: EmpiricalMeasure, law: LimitLaw, threshold: float = REGULAR_KS_MAX) -> Verdict:
    """KS distance for the regular regime, concentration statistics otherwise."""
    if measure.n == 0:
        raise ValueError("ks_against_limit: empty measure")
    atoms = np.asarray(measure.atoms, dtype=float)
    if law.regime == "regular":
        d = ks_statistic(atoms, lambda x: limit_cdf(law, np.clip(x, 0.0, 1.0)))
        return Verdict("ks_limit", d, threshold, d < threshold, n=measure.n,
                       details={"regime": "regular", "c": law.c, "q": law.q, "pbar": law.pbar})
    if law.regime == "slow":
        mass = float(np.mean((atoms <= SLOW_EDGE) | (atoms >= 1.0 - SLOW_EDGE)))
        return Verdict("boundary_mass", mass, SLOW_MIN_MASS, mass >= SLOW_MIN_MASS, n=measure.n,
                       details={"regime": "slow", "edge": SLOW_EDGE})
    med = float(np.median(atoms))
    q25, q75 = np.quantile(atoms, [0.25, 0.75])
    iqr = float(q75 - q25)
    dev = abs(med - (1.0 - law.q))
    ok = dev <= FAST_MEDIAN_TOL and iqr <= FAST_MAX_IQR
    return Verdict("concentration", dev, FAST_MEDIAN_TOL, ok, n=measure.n,
                   details={"regime": "fast", "median": med, "iqr": iqr, "iqr_max": FAST_MAX_IQR,
                            "target": 1.0 - law.q})


def normalized_measure(boundary: BoundarySpec, split: SplitSpec, n: int, seed: int | None = None,
                       stream_id: int = 0) -> EmpiricalMeasure:
    """``g_n`` via the normalized recursion, which survives overflowing lengths."""
    params = ChainParams(boundary, split, n, seed, stream_id)
    alpha = alpha_exact(params, n)
    return EmpiricalMeasure(n, alpha[1:-1].copy())


def limit_test(boundary: BoundarySpec, split: SplitSpec, n: int, seed: int | None = None,
               compare_n: int | None = None) -> Report:
    """Empirical measure at ``n`` against the regime's limit law.

    With ``compare_n`` (regular regime only) the KS distance at the smaller
    size is reported too and ``D_n < D_compare`` is asserted.
    """
    law = LimitLaw.for_regime(boundary.regime, boundary.q, split.mean)
    report = Report("limit")
    v = report.add(ks_against_limit(normalized_measure(boundary, split, n, seed), law))
    v.details["boundary"] = boundary.kind
    if compare_n is not None and law.regime == "regular":
        small = ks_against_limit(normalized_measure(boundary, split, compare_n, seed), law)
        report.add(Verdict("ks_limit_decreasing", v.statistic, small.statistic,
                           v.statistic < small.statistic, n=n,
                           details={"compare_n": compare_n}))
    return report


def write_cdf_csv(path, measure: EmpiricalMeasure, law: LimitLaw, grid=None) -> None:
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)
    emp = measure.cdf(grid)
    lim = limit_cdf(law, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "empirical_cdf", "limit_cdf"])
        for t, e, g in zip(grid, emp, lim):
            w.writerow([repr(float(t)), repr(float(e)), repr(float(g))])
