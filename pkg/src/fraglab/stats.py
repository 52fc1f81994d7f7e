"""Seeded random streams, closed-form laws and goodness-of-fit machinery.

Every stochastic routine in the package draws from an :class:`RngStream`.
Streams are PCG64 generators keyed by ``SeedSequence(seed, spawn_key=...)``,
so ``(seed, stream_id)`` pins the sample sequence on any platform and
replications never share state.

The KS tests use the asymptotic Kolmogorov critical value at level 0.01,
``1.63 / sqrt(R)`` for one sample and ``1.63 * sqrt((R1 + R2) / (R1 R2))``
for two samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KS_CRIT_001 = 1.63
Z_LIMIT = 4.0
MULTIPLE_TESTING_NOTE_THRESHOLD = 20

RNG_ALGORITHM = "PCG64 via numpy SeedSequence(seed, spawn_key=(stream_id, *sub))"


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")

    def generator(self, *sub: int) -> np.random.Generator:
        """Independent generator for this stream, optionally for a named sub-stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *sub))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


# sub-stream ids shared across modules so that independent draws never collide
SUB_BOUNDARY = 0
SUB_SPLIT = 1
SUB_CHAIN = 2
SUB_EXTRA = 3


def exponential(rng: np.random.Generator, size=None):
    """Unit exponentials by inversion, ``-log(1 - U)``."""
    return -np.log1p(-rng.random(size))


# ---------------------------------------------------------------------------
# closed-form distributions


class ClosedFormDist:
    """Distribution with an explicit CDF and an exact sampler."""

    name = "dist"

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def var(self) -> float:
        raise NotImplementedError


class Uniform01(ClosedFormDist):
    name = "uniform01"

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def sample(self, rng, size):
        return rng.random(size)

    def mean(self):
        return 0.5

    def var(self):
        return 1.0 / 12.0


class Exp1(ClosedFormDist):
    name = "exp1"

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-x)

    def sf(self, x):
        return np.exp(-np.maximum(np.asarray(x, dtype=float), 0.0))

    def sample(self, rng, size):
        return exponential(rng, size)

    def mean(self):
        return 1.0

    def var(self):
        return 1.0


class Gamma2(ClosedFormDist):
    """Shape 2, rate 1: CDF ``1 - e^{-x}(1 + x)``."""

    name = "gamma2"

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(invalid="ignore"):
            out = np.exp(-x) * (1.0 + x)
        return np.where(np.isinf(x), 0.0, out)

    def sample(self, rng, size):
        return exponential(rng, size) + exponential(rng, size)

    def mean(self):
        return 2.0

    def var(self):
        return 2.0


class Gamma3(ClosedFormDist):
    name = "gamma3"

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(invalid="ignore"):
            out = np.exp(-x) * (1.0 + x + 0.5 * x * x)
        return np.where(np.isinf(x), 0.0, out)

    def sample(self, rng, size):
        return exponential(rng, size) + exponential(rng, size) + exponential(rng, size)

    def mean(self):
        return 3.0

    def var(self):
        return 3.0


class MixGamma2Exp(ClosedFormDist):
    """Equal mixture of Gamma(2) and Exp(1); survival ``e^{-t}(1 + t/2)``.

    This is the law of each coordinate of the origin pair of the stationary
    Gamma(2) renewal process.
    """

    name = "mix_gamma2_exp"

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(invalid="ignore"):
            out = np.exp(-x) * (1.0 + 0.5 * x)
        return np.where(np.isinf(x), 0.0, out)

    def sample(self, rng, size):
        coin = rng.random(size) < 0.5
        e1 = exponential(rng, size)
        e2 = exponential(rng, size)
        return np.where(coin, e1 + e2, e1)

    def mean(self):
        return 1.5

    def var(self):
        # E[X^2] = (6 + 2) / 2 = 4
        return 4.0 - 2.25


@dataclass(frozen=True)
class BetaPow(ClosedFormDist):
    """Beta(a, 1) (``kind='left'`` power) or Beta(1, b) on ``[lo, hi]``.

    ``shape`` is the non-unit beta parameter. With ``lo == hi`` the law is
    the Dirac mass at ``lo``.
    """

    shape: float
    lo: float = 0.0
    hi: float = 1.0
    kind: str = "a1"  # "a1": Beta(shape, 1); "1b": Beta(1, shape)

    def __post_init__(self):
        if self.shape <= 0:
            raise ValueError("beta shape must be positive")
        if self.hi < self.lo:
            raise ValueError("BetaPow needs lo <= hi")
        if self.kind not in ("a1", "1b"):
            raise ValueError(f"unknown BetaPow kind {self.kind!r}")

    @property
    def name(self):
        return f"beta_{self.kind}({self.shape})[{self.lo},{self.hi}]"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        width = self.hi - self.lo
        if width == 0.0:
            return (x >= self.lo).astype(float)
        z = np.clip((x - self.lo) / width, 0.0, 1.0)
        if self.kind == "a1":
            return z**self.shape
        return 1.0 - (1.0 - z) ** self.shape

    def sample(self, rng, size):
        u = rng.random(size)
        if self.kind == "a1":
            z = u ** (1.0 / self.shape)
        else:
            z = 1.0 - (1.0 - u) ** (1.0 / self.shape)
        return self.lo + (self.hi - self.lo) * z

    def mean(self):
        m = self.shape / (self.shape + 1.0)
        z = m if self.kind == "a1" else 1.0 - m
        return self.lo + (self.hi - self.lo) * z

    def var(self):
        s = self.shape
        return (self.hi - self.lo) ** 2 * s / ((s + 1.0) ** 2 * (s + 2.0))


@dataclass(frozen=True)
class Dirac(ClosedFormDist):
    at: float

    @property
    def name(self):
        return f"dirac({self.at})"

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.at).astype(float)

    def sample(self, rng, size):
        return np.full(size, float(self.at))

    def mean(self):
        return float(self.at)

    def var(self):
        return 0.0


@dataclass(frozen=True)
class Mixture(ClosedFormDist):
    components: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) != len(w) or len(w) == 0:
            raise ValueError("mixture needs one weight per component")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise ValueError("mixture weights must be non-negative and sum to 1")

    @property
    def name(self):
        return "mixture(" + ",".join(c.name for c in self.components) + ")"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for comp, w in zip(self.components, self.weights):
            if w > 0:
                out = out + w * comp.cdf(x)
        return out

    def sample(self, rng, size):
        idx = rng.choice(len(self.weights), size=size, p=np.asarray(self.weights))
        out = np.empty(size)
        for j, comp in enumerate(self.components):
            sel = idx == j
            k = int(sel.sum())
            if k:
                out[sel] = comp.sample(rng, k)
        return out

    def mean(self):
        return float(sum(w * c.mean() for c, w in zip(self.components, self.weights)))

    def var(self):
        m = self.mean()
        second = sum(w * (c.var() + c.mean() ** 2) for c, w in zip(self.components, self.weights))
        return float(second - m * m)


# ---------------------------------------------------------------------------
# test results


@dataclass
class Verdict:
    """One pass/fail check in a machine-readable report."""

    test: str
    statistic: float
    threshold: float
    passed: bool
    n: int | None = None
    replications: int | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "test": self.test,
            "n": self.n,
            "replications": self.replications,
            "statistic": _jsonable(self.statistic),
            "threshold": _jsonable(self.threshold),
            "pass": bool(self.passed),
        }
        if self.details:
            out["details"] = {k: _jsonable(v) for k, v in self.details.items()}
        return out


@dataclass
class Report:
    name: str
    verdicts: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, verdict: Verdict) -> Verdict:
        self.verdicts.append(verdict)
        return verdict

    def extend(self, other: "Report") -> None:
        self.verdicts.extend(other.verdicts)
        self.notes.extend(other.notes)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def __getitem__(self, test: str) -> Verdict:
        for v in self.verdicts:
            if v.test == test:
                return v
        raise KeyError(test)

    def to_dict(self) -> dict:
        notes = list(self.notes)
        n_ks = sum(1 for v in self.verdicts if v.test.startswith("ks"))
        if n_ks > MULTIPLE_TESTING_NOTE_THRESHOLD:
            notes.append(
                f"{n_ks} KS tests at level 0.01 each; expect about {0.01 * n_ks:.2f} false rejections"
            )
        return {
            "name": self.name,
            "pass": self.passed,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "notes": notes,
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if np.isnan(v):
            return None
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


@dataclass(frozen=True)
class KSResult:
    statistic: float
    threshold: float
    passed: bool
    size: int

    def __iter__(self):
        # allows ``d, ok = ks_one_sample(...)``
        return iter((self.statistic, self.passed))


def ks_threshold(r1: int, r2: int | None = None) -> float:
    if r2 is None:
        return KS_CRIT_001 / np.sqrt(r1)
    return KS_CRIT_001 * np.sqrt((r1 + r2) / (r1 * r2))


def ks_statistic(samples, cdf) -> float:
    """Exact ``sup |F_hat - F|`` for a continuous or right-continuous ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    r = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, r + 1)
    return float(max(np.max(i / r - f), np.max(f - (i - 1) / r)))


def ks_one_sample(samples, dist, min_size: int = 30) -> KSResult:
    """One-sample KS against ``dist`` (a :class:`ClosedFormDist` or a CDF callable)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("ks_one_sample: empty input")
    if x.size < min_size:
        raise ValueError(f"ks_one_sample: need at least {min_size} samples, got {x.size}")
    cdf = dist.cdf if isinstance(dist, ClosedFormDist) else dist
    d = ks_statistic(x, cdf)
    thr = ks_threshold(x.size)
    return KSResult(d, thr, d < thr, x.size)


def ks_two_sample_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b, min_size: int = 30) -> KSResult:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample: empty input")
    if min(a.size, b.size) < min_size:
        raise ValueError(f"ks_two_sample: need at least {min_size} samples per side")
    d = ks_two_sample_statistic(a, b)
    thr = ks_threshold(a.size, b.size)
    return KSResult(d, thr, d < thr, a.size + b.size)


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentCheck:
    name: str
    estimate: float
    target: float
    se: float
    z: float
    passed: bool

    def verdict(self, test: str, n=None, replications=None) -> Verdict:
        return Verdict(
            test,
            abs(self.z),
            Z_LIMIT,
            self.passed,
            n=n,
            replications=replications,
            details={"estimate": self.estimate, "target": self.target, "se": self.se},
        )


def z_check(name: str, estimate: float, target: float, se: float, limit: float = Z_LIMIT) -> MomentCheck:
    """``z = (estimate - target) / se``; a zero standard error demands an exact match."""
    if se == 0.0 or not np.isfinite(se):
        ok = bool(np.isclose(estimate, target, rtol=0.0, atol=1e-12))
        z = 0.0 if ok else np.inf
        return MomentCheck(name, float(estimate), float(target), 0.0, z, ok)
    z = (estimate - target) / se
    return MomentCheck(name, float(estimate), float(target), float(se), float(z), bool(abs(z) < limit))


def mean_check(samples, target: float) -> MomentCheck:
    x = np.asarray(samples, dtype=float).ravel()
    se = x.std(ddof=1) / np.sqrt(x.size) if x.size > 1 else 0.0
    return z_check("mean", x.mean(), target, se)


def var_check(samples, target: float) -> MomentCheck:
    """Sample variance with plug-in standard error ``sqrt((m4 - v^2) / R)``."""
    x = np.asarray(samples, dtype=float).ravel()
    d = x - x.mean()
    v = float(np.mean(d * d)) * x.size / (x.size - 1)
    m4 = float(np.mean(d**4))
    se = np.sqrt(max(m4 - v * v, 0.0) / x.size)
    return z_check("var", v, target, se)


def cov_check(x, y, target: float) -> MomentCheck:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    prod = (x - x.mean()) * (y - y.mean())
    c = float(prod.sum() / (x.size - 1))
    se = prod.std(ddof=1) / np.sqrt(x.size)
    return z_check("cov", c, target, se)


def moment_report(samples, mean: float | None = None, var: float | None = None,
                  cov: Sequence | None = None) -> list[MomentCheck]:
    """z-scored moment checks.

    ``cov`` is ``(other_samples, target)``; ``samples`` is then the first
    coordinate of the pair.
    """
    out = []
    if mean is not None:
        out.append(mean_check(samples, mean))
    if var is not None:
        out.append(var_check(samples, var))
    if cov is not None:
        other, target = cov
        out.append(cov_check(samples, other, target))
    return out
