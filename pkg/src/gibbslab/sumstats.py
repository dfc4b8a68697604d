"""Exact laws of partial sums, cumulant functions and tail bounds.

Sums are built by repeated convolution of tilted members.  Each convolution
rescales both factors by their maxima, convolves the nonnegative vectors
directly (no FFT, so every output entry keeps full relative precision) and
returns to log domain.  Entries more than ~1e-300 below the mode of a factor
underflow to exact zeros; these lie far outside any event used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import EmptyCondition, InvalidParameter, TargetUnreachable
from .pmf import Family, Pmf, moments, partition_function, tilt

__all__ = [
    "Interval",
    "snap",
    "SumLaw",
    "CumulantReport",
    "ConditionTrend",
    "log_convolve",
    "sum_law",
    "sum_law_of",
    "condition_on_interval",
    "cumulants",
    "cumulant_function",
    "r_star",
    "condition_check",
    "chernoff_log_bound",
    "solve_tilt_for_mean",
]


# thresholds within this relative distance of an integer are treated as integral
INTEGER_SNAP = 1e-9


def snap(r: float) -> float:
    """Round ``r`` to the nearest integer when it is one up to float noise."""
    k = round(r)
    if abs(r - k) <= INTEGER_SNAP * max(1.0, abs(r)):
        return float(k)
    return r


@dataclass(frozen=True)
class Interval:
    """Closed integer interval ``[lo, hi]``; ``hi=None`` means unbounded above."""

    lo: int = 0
    hi: int | None = None

    @classmethod
    def above(cls, r: float) -> "Interval":
        """``{k : k > r}``; the first included point is ``floor(r) + 1``."""
        return cls(math.floor(snap(r)) + 1, None)

    @classmethod
    def below(cls, r: float) -> "Interval":
        """``{k : k < r}``; the last included point is ``ceil(r) - 1``."""
        return cls(0, math.ceil(snap(r)) - 1)

    @classmethod
    def at_most(cls, r: float) -> "Interval":
        return cls(0, math.floor(snap(r)))

    @classmethod
    def point(cls, k: int) -> "Interval":
        return cls(int(k), int(k))

    @classmethod
    def full(cls) -> "Interval":
        return cls(0, None)

    def clip(self, k_max: int) -> tuple[int, int] | None:
        """Index range ``[a, b]`` of the interval inside ``0..k_max``, or None."""
        a = max(self.lo, 0)
        b = k_max if self.hi is None else min(self.hi, k_max)
        if a > b:
            return None
        return a, b

    def shift(self, s: int) -> "Interval":
        return Interval(self.lo - s, None if self.hi is None else self.hi - s)

    def __contains__(self, k: int) -> bool:
        return k >= self.lo and (self.hi is None or k <= self.hi)

    def __str__(self) -> str:
        hi = "inf" if self.hi is None else str(self.hi)
        return f"[{self.lo}, {hi}]"


def log_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Convolve two log-domain vectors."""
    ma = np.max(a)
    mb = np.max(b)
    c = np.convolve(np.exp(a - ma), np.exp(b - mb))
    with np.errstate(divide="ignore"):
        return np.log(c) + (ma + mb)


@dataclass(frozen=True, eq=False)
class SumLaw:
    """Law of ``S = X_1 + ... + X_n`` on ``0..k_max`` in log domain."""

    log_probs: np.ndarray
    n: int
    lam: float
    tail_mass_bound: float = 0.0

    @property
    def k_max(self) -> int:
        return self.log_probs.size - 1

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def mean(self) -> float:
        p = self.probs
        return float(np.dot(p, np.arange(p.size)) / p.sum())

    def log_prob(self, k: int) -> float:
        if 0 <= k <= self.k_max:
            return float(self.log_probs[k])
        return -math.inf

    def log_mass(self, interval: Interval) -> float:
        rng = interval.clip(self.k_max)
        if rng is None:
            return -math.inf
        return float(logsumexp(self.log_probs[rng[0]: rng[1] + 1]))

    def log_upper_tails(self) -> np.ndarray:
        """``out[k] = log P(S >= k)`` for ``k = 0..k_max``."""
        lp = self.log_probs[::-1]
        return np.logaddexp.accumulate(lp)[::-1]

    def log_lower_tails(self) -> np.ndarray:
        """``out[k] = log P(S <= k)`` for ``k = 0..k_max``."""
        return np.logaddexp.accumulate(self.log_probs)


def _tilted(members: Sequence[Pmf], lam: float) -> list[np.ndarray]:
    cache: dict[int, np.ndarray] = {}
    out = []
    for m in members:
        if id(m) not in cache:
            cache[id(m)] = tilt(m, lam).log_probs
        out.append(cache[id(m)])
    return out


def _renormalize(lp: np.ndarray) -> np.ndarray:
    return lp - logsumexp(lp)


def sum_law_of(members: Sequence[Pmf], lam: float = 1.0, order: str = "sequential") -> SumLaw:
    """Law of the sum of the given members tilted by ``lam``.

    An empty member list yields the point mass at 0.
    """
    parts = _tilted(members, lam)
    tail = float(sum(m.tail_mass_bound for m in members))
    if not parts:
        return SumLaw(np.zeros(1), 0, lam, 0.0)
    if order == "sequential":
        acc = parts[0]
        for p in parts[1:]:
            acc = log_convolve(acc, p)
    elif order == "tree":
        while len(parts) > 1:
            nxt = [log_convolve(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
            if len(parts) % 2:
                nxt.append(parts[-1])
            parts = nxt
        acc = parts[0]
    else:
        raise InvalidParameter(f"unknown convolution order {order!r}")
    return SumLaw(_renormalize(acc), len(members), lam, tail)


def sum_law(family: Family, lam: float, n: int, order: str = "sequential") -> SumLaw:
    """Exact law of ``S^lam_n`` by iterated log-domain convolution."""
    if n < 1:
        raise InvalidParameter(f"n must be at least 1, got {n}")
    family.check_lambda(lam)
    return sum_law_of(family.take(n), lam, order=order)


def condition_on_interval(s: SumLaw, interval: Interval) -> SumLaw:
    """Restrict ``s`` to ``interval`` and renormalize."""
    log_mass = s.log_mass(interval)
    if log_mass == -math.inf:
        raise EmptyCondition(interval, float(np.exp(logsumexp(s.log_probs))))
    a, b = interval.clip(s.k_max)
    lp = np.full_like(s.log_probs, -np.inf)
    lp[a: b + 1] = s.log_probs[a: b + 1] - log_mass
    return SumLaw(lp, s.n, s.lam, s.tail_mass_bound)


def _member_stats(family: Family, lam: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-member ``log Z^lam_i``, tilted mean and tilted variance."""
    family.check_lambda(lam)
    logz = np.empty(n)
    mean = np.empty(n)
    var = np.empty(n)
    cache: dict[int, tuple[float, float, float]] = {}
    for i in range(n):
        m = family.member(i)
        if id(m) not in cache:
            mu, v = moments(tilt(m, lam))
            cache[id(m)] = (partition_function(m, lam), mu, v)
        logz[i], mean[i], var[i] = cache[id(m)]
    return logz, mean, var


def cumulant_function(family: Family, t: float, n: int) -> float:
    """``M_n(t) = sum_i log Z_i^{e^t}``."""
    return float(family.log_partitions(math.exp(t), n).sum())


@dataclass(frozen=True)
class CumulantReport:
    """Cumulant function values at ``t* = log lam*`` and the two gap values.

    ``gaps`` holds ``(eps, lower, upper)`` with
    ``lower = M(t*-eps) - M(t*) + eps M'(t*)`` and
    ``upper = M(t*+eps) - M(t*) - eps M'(t*)``.
    """

    t_star: float
    n: int
    M: float
    M1: float
    M2: float
    gaps: tuple[tuple[float, float, float], ...] = ()


def _shifted_lambdas(family: Family, lam_star: float, eps: float) -> tuple[float, float]:
    if eps <= 0:
        raise InvalidParameter(f"eps must be positive, got {eps}")
    lo, hi = lam_star * math.exp(-eps), lam_star * math.exp(eps)
    if hi > family.lambda_cap * (1 + 1e-12):
        raise InvalidParameter(
            f"lam*·e^eps = {hi:.6g} exceeds the working cap {family.lambda_cap:.6g}"
        )
    return lo, hi


def cumulants(family: Family, lam_star: float, n: int, eps_list: Sequence[float] = ()) -> CumulantReport:
    if n < 1:
        raise InvalidParameter(f"n must be at least 1, got {n}")
    logz, mean, var = _member_stats(family, lam_star, n)
    M, M1, M2 = float(logz.sum()), float(mean.sum()), float(var.sum())
    gaps = []
    for eps in eps_list:
        lo, hi = _shifted_lambdas(family, lam_star, eps)
        m_lo = float(family.log_partitions(lo, n).sum())
        m_hi = float(family.log_partitions(hi, n).sum())
        gaps.append((float(eps), m_lo - M + eps * M1, m_hi - M - eps * M1))
    return CumulantReport(math.log(lam_star), n, M, M1, M2, tuple(gaps))


def r_star(family: Family, lam_star: float, n: int) -> float:
    """``R*_n = E S^{lam*}_n``."""
    return cumulants(family, lam_star, n).M1


@dataclass(frozen=True)
class ConditionTrend:
    """Finite-n trajectories of both gap functions.

    ``verdict`` is a heuristic: ``"diverging"`` when both gaps increase
    strictly along ``n_list`` and both exceed ``threshold`` at the largest
    ``n``.  It is evidence, not a proof of the limit condition.
    """

    lam_star: float
    eps: float
    n_list: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    lower_slope: float
    upper_slope: float
    threshold: float
    verdict: str
    note: str = "finite-n heuristic; not a proof of divergence"

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lam_star,
            "eps": self.eps,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "note": self.note,
            "lower_slope": self.lower_slope,
            "upper_slope": self.upper_slope,
            "rows": [
                {"n": n, "lower_gap": lo, "upper_gap": up}
                for n, lo, up in zip(self.n_list, self.lower, self.upper)
            ],
        }


def _loglog_slope(ns: np.ndarray, ys: np.ndarray) -> float:
    ok = ys > 0
    if ok.sum() < 2 or np.unique(ns[ok]).size < 2:
        return math.nan
    return float(np.polyfit(np.log(ns[ok]), np.log(ys[ok]), 1)[0])


def condition_check(
    family: Family,
    lam_star: float,
    eps: float,
    n_list: Sequence[int],
    threshold: float = 10.0,
) -> ConditionTrend:
    """Evaluate both gap functions along ``n_list`` (log-log growth slopes included)."""
    ns = sorted(int(n) for n in n_list)
    if not ns or ns[0] < 1:
        raise InvalidParameter("n_list must contain positive counts")
    lo_lam, hi_lam = _shifted_lambdas(family, lam_star, eps)
    n_max = ns[-1]
    logz, mean, _ = _member_stats(family, lam_star, n_max)
    logz_lo = family.log_partitions(lo_lam, n_max)
    logz_hi = family.log_partitions(hi_lam, n_max)
    # per-member contributions; prefix sums give every n at once
    lower_c = np.cumsum(logz_lo - logz + eps * mean)
    upper_c = np.cumsum(logz_hi - logz - eps * mean)
    lower = np.array([lower_c[n - 1] for n in ns])
    upper = np.array([upper_c[n - 1] for n in ns])
    increasing = bool(np.all(np.diff(lower) > 0) and np.all(np.diff(upper) > 0)) and len(ns) > 1
    diverging = increasing and lower[-1] > threshold and upper[-1] > threshold
    arr = np.asarray(ns, dtype=float)
    return ConditionTrend(
        lam_star=float(lam_star),
        eps=float(eps),
        n_list=tuple(ns),
        lower=tuple(float(v) for v in lower),
        upper=tuple(float(v) for v in upper),
        lower_slope=_loglog_slope(arr, lower),
        upper_slope=_loglog_slope(arr, upper),
        threshold=float(threshold),
        verdict="diverging" if diverging else "not-diverging",
    )


def chernoff_log_bound(family: Family, lam: float, lam_star: float, n: int) -> float:
    """Exponential-Markov bound on the wrong-side tail of ``S^lam_n``.

    For ``lam > lam*`` this bounds ``log P(S^lam_n <= R*_n)``; for
    ``lam < lam*`` it bounds ``log P(S^lam_n >= R*_n)``.  Both cases reduce to
    ``M(t*) - M(t) + (t - t*) R*_n`` with ``t = log lam``.
    """
    if lam == lam_star:
        raise InvalidParameter("lam must differ from lam*")
    family.check_lambda(lam)
    t, ts = math.log(lam), math.log(lam_star)
    rs = r_star(family, lam_star, n)
    return cumulant_function(family, ts, n) - cumulant_function(family, t, n) + (t - ts) * rs


def solve_tilt_for_mean(family: Family, n: int, target: float, rtol: float = 1e-12) -> float:
    """Invert ``lam -> E S^lam_n`` (increasing by convexity of ``M_n``)."""
    members = family.take(n)
    floor_mean = float(sum(m.first_positive for m in members))
    cap = family.lambda_cap
    t_hi = math.log(cap)

    def excess(t: float) -> float:
        return r_star(family, math.exp(t), n) - target

    if not math.isfinite(target) or target <= floor_mean or excess(t_hi) <= 0:
        top = excess(t_hi) + target
        raise TargetUnreachable(
            f"target mean {target} outside ({floor_mean}, {top:.12g}) reachable for lam in (0, {cap:.6g}]"
        )
    t_lo, step = min(0.0, t_hi) - 1.0, 1.0
    while excess(t_lo) >= 0:
        step *= 2
        t_lo -= step
        if t_lo < -700:
            raise TargetUnreachable(f"target mean {target} too close to the minimal mean {floor_mean}")
    t = brentq(excess, t_lo, t_hi, xtol=1e-14, rtol=rtol)
    return math.exp(t)
