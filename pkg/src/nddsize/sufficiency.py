"""How much data is enough: KL traces over growing prefixes and their n*.

The data are consumed in blocks of ``m`` samples. For each prefix length
``k*m`` a KDE is fitted (own Silverman bandwidth, shared grid) and compared
with the next prefix. The sufficient amount n* is the first ``n`` at which
two consecutive KL values differ by at most ``epsilon``; with several
variables the overall requirement is the largest per-variable n*.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kde
from .divergence import kl_divergence
from .ingestion import VARIABLES, CarFollowingEvent, pool_matrix, pool_variable

UNIVARIATE = "univariate"
MULTIVARIATE = "multivariate"
JOINT = "joint"


class InsufficientDataError(ValueError):
    def __init__(self, have: int, need: int):
        super().__init__(f"insufficient data for analysis: {have} samples, need at least {need}")
        self.have = have
        self.need = need


@dataclass(frozen=True)
class SufficiencyConfig:
    m: int = 2000
    epsilon: float = 1e-4
    f: float = 10.0
    points_per_dim: int | None = None
    pad_factor: float = kde.DEFAULT_PAD
    mode: str = UNIVARIATE
    variables: tuple[str, ...] = VARIABLES
    weighted_joint: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("block size m must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.f > 0:
            raise ValueError("sample rate f must be > 0")
        if self.mode not in (UNIVARIATE, MULTIVARIATE):
            raise ValueError(f"mode must be {UNIVARIATE!r} or {MULTIVARIATE!r}")
        bad = [v for v in self.variables if v not in VARIABLES]
        if bad or not self.variables:
            raise ValueError(f"variables must be a nonempty subset of {VARIABLES}, got {self.variables}")
        object.__setattr__(self, "variables", tuple(self.variables))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variables"] = list(self.variables)
        return d


@dataclass(frozen=True)
class KLTrace:
    """``n[k]`` and ``kl[k]`` = KL(prefix n+m || prefix n)."""

    n: np.ndarray
    kl: np.ndarray
    m: int

    def __post_init__(self):
        if len(self.n) != len(self.kl):
            raise ValueError("trace columns differ in length")
        if len(self.n) > 1 and not np.all(np.diff(self.n) == self.m):
            raise ValueError("trace n values must step by m")

    def __len__(self) -> int:
        return len(self.n)

    @classmethod
    def from_values(cls, kl: Sequence[float], m: int) -> "KLTrace":
        kl = np.asarray(kl, dtype=np.float64)
        return cls(m * np.arange(1, kl.size + 1, dtype=np.int64), kl, m)

    def value_at(self, n: int) -> float:
        (idx,) = np.nonzero(self.n == n)
        return float(self.kl[idx[0]])


def minutes(n: int | float, f: float = 10.0) -> float:
    """Driving time in minutes for ``n`` samples at ``f`` Hz."""
    return n / (f * 60.0)


def kl_trace(samples, config: SufficiencyConfig = SufficiencyConfig(),
             estimator: Callable | None = None) -> KLTrace:
    """KL between consecutive prefixes ``k*m`` and ``(k+1)*m``.

    ``samples`` is a vector (univariate) or an (n, D) matrix (joint). The
    grid comes from the full data, so every prefix shares one support.
    """
    x = np.asarray(samples, dtype=np.float64)
    m = config.m
    need = 3 * m
    if x.shape[0] < need:
        raise InsufficientDataError(x.shape[0], need)
    estimator = estimator or kde.estimate
    grid = kde.build_grid(x, config.points_per_dim, config.pad_factor)
    weighted = config.weighted_joint if x.ndim > 1 else None

    blocks = x.shape[0] // m
    ns = []
    kls = []
    prev = estimator(x[:m], grid, kde.silverman_bandwidth(x[:m]))
    for k in range(1, blocks):
        cur = estimator(x[:(k + 1) * m], grid, kde.silverman_bandwidth(x[:(k + 1) * m]))
        ns.append(k * m)
        kls.append(kl_divergence(cur, prev, weighted=weighted).value)
        prev = cur
    return KLTrace(np.asarray(ns, dtype=np.int64), np.asarray(kls), m)


def find_n_star(trace: KLTrace, epsilon: float) -> int | None:
    """Smallest n with ``|KL(n) - KL(n+m)| <= epsilon``; None if never."""
    if len(trace) < 2:
        raise ValueError("need at least 2 trace entries")
    kl = trace.kl
    gaps = np.abs(np.diff(kl))
    # a few ulps of slack so decimal ties like 0.01 - 0.0099 count as equal
    slack = 4 * np.finfo(np.float64).eps * np.maximum(np.abs(kl[:-1]), np.abs(kl[1:]))
    hits = np.nonzero(gaps <= epsilon + slack)[0]
    return int(trace.n[hits[0]]) if hits.size else None


@dataclass(frozen=True)
class VariableResult:
    n_star: int | None
    t_star: float | None

    @property
    def converged(self) -> bool:
        return self.n_star is not None


@dataclass
class SufficiencyResult:
    per_variable: dict[str, VariableResult]
    overall_n_star: int | None
    overall_t_star: float | None
    traces: dict[str, KLTrace]
    config: SufficiencyConfig
    failed: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.overall_n_star is not None


def summarize(traces: Mapping[str, KLTrace], config: SufficiencyConfig,
              epsilon: float | None = None) -> SufficiencyResult:
    """Apply the epsilon rule to ready traces; overall n* is the max."""
    eps = config.epsilon if epsilon is None else epsilon
    per = {}
    for name, tr in traces.items():
        n_star = find_n_star(tr, eps)
        per[name] = VariableResult(n_star, None if n_star is None else minutes(n_star, config.f))
    failed = [name for name, r in per.items() if not r.converged]
    overall = None if failed else max(r.n_star for r in per.values())
    if eps != config.epsilon:
        config = SufficiencyConfig(**{**config.to_dict(), "epsilon": eps})
    return SufficiencyResult(
        per_variable=per,
        overall_n_star=overall,
        overall_t_star=None if overall is None else minutes(overall, config.f),
        traces=dict(traces),
        config=config,
        failed=failed,
    )


def compute_traces(events: Sequence[CarFollowingEvent],
                   config: SufficiencyConfig = SufficiencyConfig(),
                   estimator: Callable | None = None) -> dict[str, KLTrace]:
    if not events:
        raise ValueError("no events to analyze")
    if config.mode == MULTIVARIATE:
        return {JOINT: kl_trace(pool_matrix(events, config.variables), config, estimator)}
    return {v: kl_trace(pool_variable(events, v), config, estimator) for v in config.variables}


def analyze(events: Sequence[CarFollowingEvent],
            config: SufficiencyConfig = SufficiencyConfig()) -> SufficiencyResult:
    """Per-variable (or joint) traces, n* for each, overall = max."""
    return summarize(compute_traces(events, config), config)


def epsilon_sweep(events: Sequence[CarFollowingEvent], config: SufficiencyConfig,
                  epsilons: Sequence[float],
                  traces: Mapping[str, KLTrace] | None = None) -> list[tuple[float, SufficiencyResult]]:
    """One result per epsilon; the traces are computed once and reused."""
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("need at least one epsilon")
    if any(e <= 0 for e in epsilons):
        raise ValueError("epsilons must be positive")
    if len(set(epsilons)) != len(epsilons):
        raise ValueError("epsilons must be distinct")
    if traces is None:
        traces = compute_traces(events, config)
    return [(e, summarize(traces, config, e)) for e in epsilons]
