"""Rescaled one-point masses ``H_n(k) = (n+1) P(X_n = k)`` in the symmetric
linear-growth setup ``a[n,0] = -(n+1)/2``, ``a[n,n+1] = (n+1)/2``, ``p[n,k] = p``.

The rows obey

    H_n(0) = 1/2 + (1-p) H_{n-1}(0)
    H_n(k) = p H_{n-1}(k-1) + (1-p) H_{n-1}(k),   1 <= k <= n-1
    H_n(n) = 1/2 + p H_{n-1}(n-1)

from ``H_0 = (1,)``. Near the left edge ``H_n(k) -> 1/(2p)`` and near the
right edge ``H_n(n-k) -> 1/(2(1-p))``. The bulk ``k ~ n/2`` is exposed but
nothing is asserted about it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .markov import ChainParams, alpha_exact
from .partition import BoundarySpec, SplitSpec
from .stats import Report, Verdict


@dataclass(frozen=True)
class HTable:
    n: int
    values: np.ndarray
    p: float

    @property
    def mass(self) -> float:
        return math.fsum(self.values)


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")


def _advance(buf: np.ndarray, m: int, p: float) -> None:
    """Row ``m-1 -> m`` in place on ``buf[:m+1]``."""
    # the right edge reads the old H_{m-1}(m-1) before the interior overwrites it
    right = 0.5 + p * buf[m - 1]
    # written as x + p (y - x) so the row mass telescopes without the rounding of 1 - p
    buf[1:m] += p * (buf[0 : m - 1] - buf[1:m])
    buf[0] = 0.5 + buf[0] - p * buf[0]
    buf[m] = right


def h_rows(p: float, n: int):
    """Yield ``H_0, H_1, ..., H_n``."""
    _check_p(p)
    if n < 0:
        raise ValueError("n must be non-negative")
    buf = np.zeros(n + 1)
    buf[0] = 1.0
    yield buf[:1].copy()
    for m in range(1, n + 1):
        _advance(buf, m, p)
        yield buf[: m + 1].copy()


def h_table(p: float, n: int) -> HTable:
    _check_p(p)
    if n < 0:
        raise ValueError("n must be non-negative")
    buf = np.zeros(n + 1)
    buf[0] = 1.0
    for m in range(1, n + 1):
        _advance(buf, m, p)
    return HTable(n, buf, p)


def h_edge_closed_form(p: float, n: int) -> float:
    """``H_n(0) = 1/(2p) + (1-p)^n (1 - 1/(2p))``."""
    return 1.0 / (2.0 * p) + (1.0 - p) ** n * (1.0 - 1.0 / (2.0 * p))


def h_limit_check(p: float, k_max: int, n: int, tol: float) -> Report:
    if n < 10 * k_max:
        raise ValueError("h_limit_check needs n >= 10 * k_max")
    table = h_table(p, n)
    ks = np.arange(k_max + 1)
    left_gap = float(np.max(np.abs(table.values[ks] - 1.0 / (2.0 * p))))
    right_gap = float(np.max(np.abs(table.values[n - ks] - 1.0 / (2.0 * (1.0 - p)))))
    report = Report("genfun_limits")
    report.add(Verdict("h_left_edge", left_gap, tol, left_gap <= tol, n=n,
                       details={"p": p, "k_max": k_max, "target": 1.0 / (2.0 * p)}))
    report.add(Verdict("h_right_edge", right_gap, tol, right_gap <= tol, n=n,
                       details={"p": p, "k_max": k_max, "target": 1.0 / (2.0 * (1.0 - p))}))
    mass_gap = abs(table.mass - (n + 1))
    report.add(Verdict("h_mass", mass_gap, 1e-9 * (n + 1), mass_gap <= 1e-9 * (n + 1), n=n))
    return report


def symmetric_linear_params(p: float, n: int) -> ChainParams:
    """Boundaries ``-(n+1)/2, (n+1)/2`` and constant proportion ``p``."""
    return ChainParams(BoundarySpec.power(1.0, r=1.0, q=0.5), SplitSpec.det(p), n)


def h_cross_check(p: float, n: int) -> float:
    """``max_k |(n+1)(alpha[n,k+1] - alpha[n,k]) - H_n(k)|``."""
    _check_p(p)
    if n > 2000:
        raise ValueError("h_cross_check is quadratic; n must be <= 2000")
    alpha = alpha_exact(symmetric_linear_params(p, n), n)
    incr = (n + 1) * np.diff(alpha)
    return float(np.max(np.abs(incr - h_table(p, n).values)))


def write_h_csv(path, table: HTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "k", "H"])
        for k, h in enumerate(table.values):
            w.writerow([table.n, k, repr(float(h))])
