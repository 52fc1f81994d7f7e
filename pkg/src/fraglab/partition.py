"""Break-point evolution for fragmentation with erasure on expanding intervals.

At step ``n`` the partition of ``(a[n,0], a[n,n+1]]`` has interior break
points ``a[n,1..n]`` given by

    a[n,k] = p[n,k] * a[n-1,k-1] + (1 - p[n,k]) * a[n-1,k],   k = 1..n

and the two end points come from a :class:`BoundarySpec`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .stats import SUB_BOUNDARY, SUB_SPLIT, RngStream, exponential

BOUNDARY_KINDS = ("constant", "log", "power", "exp", "poisson", "custom")
SPLIT_KINDS = ("det", "random_strat", "fully_random")


# ---------------------------------------------------------------------------
# boundaries


@dataclass(frozen=True)
class BoundaryPath:
    """Realized boundary sequence up to a horizon.

    ``ratio[k]`` is ``l[k-1] / l[k]`` and ``shift[k]`` is
    ``(a[k-1,0] - a[k,0]) / l[k]`` (index 0 unused). These stay finite even
    when the lengths themselves overflow, which is what the normalized
    recursion needs.
    """

    left: np.ndarray
    right: np.ndarray
    ratio: np.ndarray
    shift: np.ndarray
    q: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.left) - 1

    @property
    def length(self) -> np.ndarray:
        return self.right - self.left


@dataclass(frozen=True)
class BoundarySpec:
    """End-point sequences ``(a[n,0], a[n,n+1])`` with growth regime ``c``.

    Built-in families grow the length ``l_n`` and attach the fraction ``q``
    of every increment to the right end, so that ``q_n == q``:

    ========== ======================= =========
    kind       l_n                     regime c
    ========== ======================= =========
    constant   r                       0
    log        r * log(n + e)          0
    power      r * (n + 1)**c          c
    exp        r * e**n                inf
    poisson    S_n + S'_n (random)     1, q=1/2
    custom     from ``table``          metadata
    ========== ======================= =========

    ``anchor`` is ``a[0,0]``; by default ``-(1 - q) * l_0`` so that
    ``a[n,0] = -(1 - q) l_n`` and ``a[n,n+1] = q l_n``.
    """

    kind: str = "power"
    c: float = 1.0
    r: float = 1.0
    q: float = 0.5
    anchor: float | None = None
    table: tuple | None = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.r <= 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.kind == "power" and not (0.0 < self.c < math.inf):
            raise ValueError(f"power boundary needs 0 < c < inf, got {self.c}")
        if self.kind == "custom":
            if self.table is None or len(self.table) == 0:
                raise ValueError("custom boundary needs a table of (left, right) rows")
            _check_boundary(np.array([t[0] for t in self.table], float),
                            np.array([t[1] for t in self.table], float))

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, left: float = 0.0, right: float = 1.0, q: float = 0.5) -> "BoundarySpec":
        return cls("constant", c=0.0, r=right - left, q=q, anchor=left)

    @classmethod
    def power(cls, c: float, r: float = 1.0, q: float = 0.5, anchor=None) -> "BoundarySpec":
        return cls("power", c=c, r=r, q=q, anchor=anchor)

    @classmethod
    def logarithmic(cls, r: float = 1.0, q: float = 0.5, anchor=None) -> "BoundarySpec":
        return cls("log", c=0.0, r=r, q=q, anchor=anchor)

    @classmethod
    def exponential(cls, r: float = 1.0, q: float = 0.5, anchor=None) -> "BoundarySpec":
        return cls("exp", c=math.inf, r=r, q=q, anchor=anchor)

    @classmethod
    def poisson(cls) -> "BoundarySpec":
        return cls("poisson", c=1.0, r=1.0, q=0.5)

    @classmethod
    def custom(cls, table: Sequence[tuple[float, float]], c: float, q: float) -> "BoundarySpec":
        return cls("custom", c=c, q=q, table=tuple((float(a), float(b)) for a, b in table))

    @classmethod
    def regular_case(cls, r: float, p: float) -> "BoundarySpec":
        """``a[n,0] = -r p (n+1)``, ``a[n,n+1] = r (1-p) (n+1)``."""
        return cls.power(1.0, r=r, q=1.0 - p)

    # properties ---------------------------------------------------------
    @property
    def regime(self) -> float:
        if self.kind in ("constant", "log"):
            return 0.0
        if self.kind == "exp":
            return math.inf
        return float(self.c)

    @property
    def is_random(self) -> bool:
        return self.kind == "poisson"

    def _log_length(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        lr = math.log(self.r)
        if self.kind == "constant":
            return np.full(n.shape, lr)
        if self.kind == "log":
            return lr + np.log(np.log(n + math.e))
        if self.kind == "power":
            return lr + self.c * np.log1p(n)
        if self.kind == "exp":
            return lr + n
        raise ValueError(f"{self.kind} boundary has no closed-form length")

    def length_fn(self, t):
        """Continuous extension ``L(t)`` with ``L(n) = l_n`` (deterministic families)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.r)
        if self.kind == "log":
            return self.r * np.log(t + math.e)
        if self.kind == "power":
            return self.r * (t + 1.0) ** self.c
        if self.kind == "exp":
            return self.r * np.exp(t)
        if self.kind == "custom":
            lengths = np.array([b - a for a, b in self.table])
            return np.interp(t, np.arange(len(lengths)), lengths)
        raise ValueError("poisson boundary: use BoundaryPath.length with linear interpolation")

    def realize(self, n: int, rng: np.random.Generator | None = None) -> BoundaryPath:
        """Boundary sequence for steps ``0..n``."""
        if n < 0:
            raise ValueError("horizon must be non-negative")
        steps = np.arange(n + 1)
        if self.kind == "poisson":
            if rng is None:
                raise ValueError("poisson boundary is random: an rng (seed) is required")
            e = exponential(rng, n + 1)
            e_prime = exponential(rng, n + 1)
            right = np.cumsum(e)
            left = -np.cumsum(e_prime)
            return _path_from_arrays(left, right)
        if self.kind == "custom":
            if n + 1 > len(self.table):
                raise ValueError(f"custom table has {len(self.table)} rows, horizon {n} needs {n + 1}")
            arr = np.asarray(self.table[: n + 1], dtype=float)
            return _path_from_arrays(arr[:, 0], arr[:, 1])

        log_l = self._log_length(steps)
        ratio = np.zeros(n + 1)
        ratio[1:] = np.exp(log_l[:-1] - log_l[1:])
        shift = np.zeros(n + 1)
        shift[1:] = (1.0 - self.q) * (1.0 - ratio[1:])
        with np.errstate(over="ignore"):
            length = self.length_fn(steps)
            l0 = length[0]
            anchor = -(1.0 - self.q) * l0 if self.anchor is None else self.anchor
            left = anchor - (1.0 - self.q) * (length - l0)
            right = anchor + l0 + self.q * (length - l0)
        q = np.full(n + 1, self.q)
        q[0] = np.nan
        if self.kind == "constant":
            q[1:] = np.nan
        return BoundaryPath(left, right, ratio, shift, q)

    def endpoints(self, n: int, rng: np.random.Generator | None = None) -> tuple[float, float]:
        path = self.realize(n, rng)
        return float(path.left[n]), float(path.right[n])


def _check_boundary(left: np.ndarray, right: np.ndarray) -> None:
    if not left[0] < right[0]:
        raise ValueError(f"boundary: need a[0,0] < a[0,1], got {left[0]} >= {right[0]}")
    bad = np.nonzero(np.diff(left) > 0)[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise ValueError(f"boundary: a[n,0] must be non-increasing, violated at n={k}")
    bad = np.nonzero(np.diff(right) < 0)[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise ValueError(f"boundary: a[n,n+1] must be non-decreasing, violated at n={k}")


def _path_from_arrays(left, right) -> BoundaryPath:
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    _check_boundary(left, right)
    length = right - left
    n = len(left) - 1
    ratio = np.zeros(n + 1)
    shift = np.zeros(n + 1)
    q = np.full(n + 1, np.nan)
    ratio[1:] = length[:-1] / length[1:]
    shift[1:] = (left[:-1] - left[1:]) / length[1:]
    growth = length[1:] - length[:-1]
    grew = growth > 0
    q[1:][grew] = (right[1:] - right[:-1])[grew] / growth[grew]
    return BoundaryPath(left, right, ratio, shift, q)


def q_sequence(left, right) -> np.ndarray:
    """``q_n`` for ``n >= 1``; NaN where ``l_n == l_{n-1}`` (undefined)."""
    return _path_from_arrays(left, right).q[1:]


# ---------------------------------------------------------------------------
# splitting proportions


@dataclass(frozen=True)
class SplitSpec:
    """Source of splitting proportions ``p[n,k]``.

    * ``det``: deterministic stratified, ``p[n,k] = p_n`` (``p`` is a float
      or a sequence indexed by ``n - 1``);
    * ``random_strat``: one draw ``P_n`` of ``law`` per step;
    * ``fully_random``: i.i.d. draws of ``law`` for every ``(n, k)``.

    ``law`` is ``"uniform"`` or ``("beta", a, b)``.
    """

    kind: str = "det"
    p: float | tuple = 0.5
    law: str | tuple = "uniform"

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == "det":
            vals = np.atleast_1d(np.asarray(self.p, dtype=float))
            if np.any((vals < 0) | (vals > 1)):
                raise ValueError("deterministic proportions must lie in [0, 1]")
        else:
            _law_mean(self.law)

    @classmethod
    def det(cls, p) -> "SplitSpec":
        if np.ndim(p):
            p = tuple(float(x) for x in p)
        return cls("det", p=p)

    @classmethod
    def random_strat(cls, law="uniform") -> "SplitSpec":
        return cls("random_strat", law=law)

    @classmethod
    def fully_random(cls, law="uniform") -> "SplitSpec":
        return cls("fully_random", law=law)

    @property
    def is_random(self) -> bool:
        return self.kind != "det"

    @property
    def mean(self) -> float:
        """``p_bar``: the Cesaro mean of ``p_n`` or the mean of ``law``."""
        if self.kind == "det":
            return float(np.mean(np.atleast_1d(np.asarray(self.p, dtype=float))))
        return _law_mean(self.law)

    def det_value(self, n: int) -> float:
        if np.ndim(self.p) == 0:
            return float(self.p)
        if n - 1 >= len(self.p):
            raise ValueError(f"deterministic sequence has {len(self.p)} terms, step {n} requested")
        return float(self.p[n - 1])

    def row(self, n: int, rng: np.random.Generator | None) -> np.ndarray:
        """Proportions ``p[n,1..n]`` for step ``n``."""
        if self.kind == "det":
            return np.full(n, self.det_value(n))
        if rng is None:
            raise ValueError("random split: an rng (seed) is required")
        if self.kind == "random_strat":
            return np.full(n, _draw_law(self.law, rng, 1)[0])
        return _draw_law(self.law, rng, n)


def _law_mean(law) -> float:
    if law == "uniform":
        return 0.5
    if isinstance(law, (tuple, list)) and len(law) == 3 and law[0] == "beta":
        a, b = float(law[1]), float(law[2])
        if a <= 0 or b <= 0:
            raise ValueError("beta law parameters must be positive")
        return a / (a + b)
    raise ValueError(f"unknown proportion law {law!r}")


def _draw_law(law, rng: np.random.Generator, size: int) -> np.ndarray:
    if law == "uniform":
        return rng.random(size)
    return rng.beta(float(law[1]), float(law[2]), size)


# ---------------------------------------------------------------------------
# break points


@dataclass(frozen=True)
class BreakPoints:
    n: int
    points: np.ndarray

    def __post_init__(self):
        if len(self.points) != self.n + 2:
            raise ValueError(f"step {self.n} needs {self.n + 2} points, got {len(self.points)}")

    @property
    def interior(self) -> np.ndarray:
        return self.points[1:-1]

    @property
    def length(self) -> float:
        return float(self.points[-1] - self.points[0])


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform measure with weight ``1/n`` on each normalized interior point."""

    n: int
    atoms: np.ndarray

    @property
    def weight(self) -> float:
        return 1.0 / self.n if self.n else 0.0

    def cdf(self, t) -> np.ndarray:
        if self.n == 0:
            return np.zeros(np.shape(t))
        srt = np.sort(self.atoms)
        return np.searchsorted(srt, np.asarray(t, dtype=float), side="right") / self.n

    def mass(self, lo: float, hi: float) -> float:
        if self.n == 0:
            return 0.0
        return float(np.mean((self.atoms >= lo) & (self.atoms <= hi)))


def trivial_partition(left: float, right: float) -> BreakPoints:
    return BreakPoints(0, np.array([left, right], dtype=float))


def evolve_step(prev: BreakPoints, proportions, boundary: tuple[float, float]) -> BreakPoints:
    """One split-merge step from ``prev`` (step ``n-1``) to step ``n``."""
    n = prev.n + 1
    p = np.asarray(proportions, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"step {n} needs {n} proportions, got shape {p.shape}")
    bad = np.nonzero(~((p >= 0.0) & (p <= 1.0)))[0]
    if bad.size:
        k = int(bad[0]) + 1
        raise ValueError(f"proportion p[{n},{k}] = {p[k - 1]} outside [0, 1]")
    left, right = float(boundary[0]), float(boundary[1])
    if not np.isfinite(left) or not np.isfinite(right):
        raise ValueError(f"boundary at step {n} is not finite; use the normalized recursion")
    a = prev.points
    if left > a[0]:
        raise ValueError(f"boundary a[{n},0] = {left} exceeds a[{n - 1},0] = {a[0]} (index 0)")
    if right < a[-1]:
        raise ValueError(f"boundary a[{n},{n + 1}] = {right} below a[{n - 1},{n}] = {a[-1]} (index {n + 1})")
    out = np.empty(n + 2)
    out[0] = left
    out[n + 1] = right
    out[1 : n + 1] = p * a[:-1] + (1.0 - p) * a[1:]
    return BreakPoints(n, out)


@dataclass
class Evolution:
    """Deterministic replay of boundary and proportion draws for one seed."""

    boundary: BoundarySpec
    split: SplitSpec
    n_max: int
    seed: int | None = None
    stream_id: int = 0
    path: BoundaryPath = field(init=False)

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if (self.boundary.is_random or self.split.is_random) and self.seed is None:
            raise ValueError("a seed is required for random boundaries or proportions")
        stream = RngStream(self.seed or 0, self.stream_id)
        self.path = self.boundary.realize(self.n_max, stream.generator(SUB_BOUNDARY))

    def rows(self) -> Iterator[np.ndarray]:
        """Proportion rows for steps ``1..n_max``, identical on every call."""
        rng = RngStream(self.seed or 0, self.stream_id).generator(SUB_SPLIT) if self.split.is_random else None
        for n in range(1, self.n_max + 1):
            yield self.split.row(n, rng)

    def steps(self) -> Iterator[BreakPoints]:
        bp = trivial_partition(self.path.left[0], self.path.right[0])
        yield bp
        for n, row in enumerate(self.rows(), start=1):
            bp = evolve_step(bp, row, (self.path.left[n], self.path.right[n]))
            yield bp

    def final(self) -> BreakPoints:
        """Step ``n_max`` without keeping the history (in place, O(n) memory)."""
        path = self.path
        if not (np.isfinite(path.left[-1]) and np.isfinite(path.right[-1])):
            raise ValueError("boundary overflows before n_max; use the normalized recursion")
        a = np.empty(self.n_max + 2)
        a[0], a[1] = path.left[0], path.right[0]
        for n, row in enumerate(self.rows(), start=1):
            a[1 : n + 1] = row * a[0:n] + (1.0 - row) * a[1 : n + 1]
            a[0] = path.left[n]
            a[n + 1] = path.right[n]
        return BreakPoints(self.n_max, a)


def evolve(boundary: BoundarySpec, split: SplitSpec, n_max: int, seed: int | None = None) -> list[BreakPoints]:
    """All partitions ``P_0 .. P_{n_max}``; a pure function of ``(specs, seed)``."""
    return list(Evolution(boundary, split, n_max, seed).steps())


def normalize(bp: BreakPoints) -> EmpiricalMeasure:
    """Push the interior points through ``x -> (x - a[n,0]) / l_n``."""
    length = bp.points[-1] - bp.points[0]
    if not length > 0:
        raise ValueError(f"degenerate interval at step {bp.n}: l_n = {length}")
    atoms = (bp.points[1:-1] - bp.points[0]) / length
    return EmpiricalMeasure(bp.n, atoms)


# ---------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def write_breakpoints_csv(path, steps: Sequence[BreakPoints]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "k", "a"])
        for bp in steps:
            for k, a in enumerate(bp.points):
                w.writerow([bp.n, k, _fmt(a)])


def write_measure_csv(path, measures: Sequence[EmpiricalMeasure]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "k", "alpha"])
        for m in measures:
            for k, x in enumerate(m.atoms, start=1):
                w.writerow([m.n, k, _fmt(x)])


def read_breakpoints_csv(path) -> list[BreakPoints]:
    rows: dict[int, list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(int(rec["n"]), []).append((int(rec["k"]), float(rec["a"])))
    out = []
    for n in sorted(rows):
        pts = [a for _, a in sorted(rows[n])]
        out.append(BreakPoints(n, np.array(pts)))
    return out
