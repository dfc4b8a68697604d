"""Conditioned finite-dimensional laws and convergence experiments.

The law of the first ``ell`` coordinates given a sum event is

    P(X_head = x | S_n in I) = prod_{i<ell} nu_i(x_i) * P(T in I - sum(x)) / P(S_n in I)

where ``T`` is the sum of the remaining ``n - ell`` members, whose law is
convolved once per call.  Experiments compare it in total variation with the
tilted product law ``prod_{i<ell} nu_i^{lam*}``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .canonical import MAX_CONFIGS, DominanceResult, JointTable, product_table, stochastic_dominance
from .errors import EmptyCondition, InstanceTooLarge, InvalidInput, InvalidParameter
from .pmf import Family, Pmf, tilt
from .sumstats import Interval, condition_check, r_star, snap, sum_law_of

__all__ = [
    "MODES",
    "ConditionedLaw",
    "ConvergenceRow",
    "ConvergenceTable",
    "SandwichReport",
    "event_interval",
    "conditioned_law",
    "tilted_product",
    "tv_distance",
    "gcp_experiment",
    "sandwich_check",
]

MODES = ("above", "below", "equal-floor")


def event_interval(mode: str, r: float) -> Interval:
    """``above``: S > r; ``below``: S < r; ``equal-floor``: S = floor(r)."""
    if mode == "above":
        return Interval.above(r)
    if mode == "below":
        return Interval.below(r)
    if mode == "equal-floor":
        return Interval.point(math.floor(snap(r)))
    raise InvalidParameter(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class ConditionedLaw:
    ell: int
    joint: JointTable
    mode: str
    lam: float
    n: int
    r: float
    interval: Interval
    log_event_mass: float

    @property
    def event_mass(self) -> float:
        return math.exp(self.log_event_mass)


def _check_dense(members: Sequence[Pmf]) -> None:
    size = math.prod(m.support_max + 1 for m in members)
    if size > MAX_CONFIGS:
        raise InstanceTooLarge(f"{size} head configurations exceed the dense cap of {MAX_CONFIGS}")


def conditioned_law(family: Family, lam: float, ell: int, n: int, mode: str, r: float) -> ConditionedLaw:
    """Law of ``(X^lam_1..X^lam_ell)`` given the ``mode`` event on ``S^lam_n``."""
    if not 1 <= ell <= n:
        raise InvalidParameter(f"need 1 <= ell <= n, got ell={ell}, n={n}")
    family.check_lambda(lam)
    interval = event_interval(mode, r)
    head = [tilt(m, lam) for m in family.take(ell)]
    _check_dense(head)
    tail = sum_law_of(family.take(n, start=ell), lam)
    lp, total = product_table(head)
    s_values = np.unique(total)
    tail_mass = np.full(int(s_values.max()) + 1, -np.inf)
    for s in s_values:
        tail_mass[s] = tail.log_mass(interval.shift(int(s)))
    numer = lp + tail_mass[total]
    log_event = float(logsumexp(numer))
    if log_event == -math.inf:
        raise EmptyCondition(interval, 1.0)
    return ConditionedLaw(ell, JointTable(numer - log_event), mode, float(lam), n, float(r), interval, log_event)


def tilted_product(family: Family, lam: float, ell: int) -> JointTable:
    """``prod_{i<ell} nu_i^lam`` as a dense table."""
    family.check_lambda(lam)
    head = [tilt(m, lam) for m in family.take(ell)]
    _check_dense(head)
    return JointTable(product_table(head)[0])


def _as_probs(obj) -> np.ndarray:
    if isinstance(obj, (JointTable, Pmf)):
        return obj.probs
    return np.asarray(obj, dtype=np.float64)


def tv_distance(p, q) -> float:
    """Total variation ``(1/2) sum |p - q|`` between equally shaped laws."""
    a, b = _as_probs(p), _as_probs(q)
    if a.shape != b.shape:
        raise InvalidInput(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(0.5 * np.abs(a - b).sum())


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    r_star: float
    event_mass: float
    tv: float


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    lam_star: float
    ell: int
    mode: str
    family: str
    condition: dict = field(default_factory=dict)

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]

    def metadata(self) -> dict:
        return {
            "family": self.family,
            "lambda_star": self.lam_star,
            "ell": self.ell,
            "mode": self.mode,
            "condition": self.condition,
        }


def _check_hypothesis(mode: str, lam_star: float, override: bool) -> None:
    if override:
        return
    if mode == "above" and not lam_star > 1:
        raise InvalidParameter("mode 'above' needs lam* > 1 (pass override to explore)")
    if mode == "below" and not lam_star < 1:
        raise InvalidParameter("mode 'below' needs lam* < 1 (pass override to explore)")


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    try:
        return max(1, int(os.environ.get("GIBBSLAB_THREADS", "1")))
    except ValueError:
        return 1


def gcp_experiment(
    family: Family,
    lam_star: float,
    ell: int,
    n_list: Sequence[int],
    mode: str,
    *,
    eps: float = 0.1,
    override: bool = False,
    condition_tilted: bool = False,
    workers: int | None = None,
) -> ConvergenceTable:
    """TV distance between the conditioned head law and its tilted limit, per ``n``.

    The base variables (``lam = 1``) are conditioned on the ``mode`` event
    at ``R*_n``; with ``condition_tilted`` the variables tilted by ``lam*``
    are conditioned instead.  No convergence rate is fitted.
    """
    event_interval(mode, 0.0)
    _check_hypothesis(mode, lam_star, override)
    family.check_lambda(lam_star)
    ns = [int(n) for n in n_list]
    if not ns or min(ns) < ell:
        raise InvalidParameter(f"every n must be at least ell={ell}")
    target = tilted_product(family, lam_star, ell)
    lam = lam_star if condition_tilted else 1.0

    def row(n: int) -> ConvergenceRow:
        rs = r_star(family, lam_star, n)
        law = conditioned_law(family, lam, ell, n, mode, rs)
        return ConvergenceRow(n, rs, law.event_mass, tv_distance(law.joint, target))

    with ThreadPoolExecutor(max_workers=_workers(workers)) as pool:
        rows = tuple(pool.map(row, ns))

    try:
        condition = condition_check(family, lam_star, eps, ns).to_dict()
    except InvalidParameter as exc:
        condition = {"error": str(exc)}
    label = ", ".join(m.label for m in family.members)
    return ConvergenceTable(rows, float(lam_star), ell, mode, label, condition)


@dataclass(frozen=True)
class SandwichReport:
    """Bracket dominations and distances for one ``n``.

    ``lower``/``upper`` are the bracket laws at ``lam_lo``/``lam_hi``;
    ``limit_tv_*`` are the distances of the unconditioned tilted laws at the
    bracket ends to the target, i.e. what the brackets tend to as ``n`` grows.
    """

    mode: str
    n: int
    r: float
    lower_below_base: DominanceResult
    base_below_upper: DominanceResult
    tv_base: float
    tv_lower: float
    tv_upper: float
    limit_tv_lower: float
    limit_tv_upper: float

    @property
    def holds(self) -> bool:
        return self.lower_below_base.holds and self.base_below_upper.holds

    @property
    def bracket_tv(self) -> float:
        return max(self.limit_tv_lower, self.limit_tv_upper)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "r": self.r,
            "holds": self.holds,
            "lower_below_base": self.lower_below_base.to_dict(),
            "base_below_upper": self.base_below_upper.to_dict(),
            "tv_base": self.tv_base,
            "tv_lower": self.tv_lower,
            "tv_upper": self.tv_upper,
            "limit_tv_lower": self.limit_tv_lower,
            "limit_tv_upper": self.limit_tv_upper,
            "bracket_tv": self.bracket_tv,
        }


def sandwich_check(
    family: Family,
    lam_star: float,
    lam_lo: float,
    lam_hi: float,
    ell: int,
    n: int,
    mode: str,
    r: float | None = None,
) -> SandwichReport:
    """Verify the two bracket dominations around the conditioned base law.

    Mode ``above`` (``1 < lam_lo < lam* < lam_hi``): the base law given
    ``S_n > r`` lies between the ``lam_lo`` law given ``S < r`` and the
    ``lam_hi`` law given ``S > r``.  Mode ``below``
    (``lam_lo < lam* < lam_hi < 1``): the base law given ``S_n < r`` lies
    between the ``lam_lo`` law given ``S < r`` and the ``lam_hi`` law given
    ``S > r``.  ``r`` defaults to ``R*_n``.
    """
    if mode == "above":
        if not 1 < lam_lo < lam_star < lam_hi:
            raise InvalidParameter("mode 'above' needs 1 < lam_lo < lam* < lam_hi")
    elif mode == "below":
        if not 0 < lam_lo < lam_star < lam_hi < 1:
            raise InvalidParameter("mode 'below' needs 0 < lam_lo < lam* < lam_hi < 1")
    else:
        raise InvalidParameter(f"sandwich mode must be 'above' or 'below', got {mode!r}")
    family.check_lambda(lam_hi)
    if r is None:
        r = r_star(family, lam_star, n)
    base = conditioned_law(family, 1.0, ell, n, mode, r)
    lower = conditioned_law(family, lam_lo, ell, n, "below", r)
    upper = conditioned_law(family, lam_hi, ell, n, "above", r)
    target = tilted_product(family, lam_star, ell)
    return SandwichReport(
        mode=mode,
        n=n,
        r=float(r),
        lower_below_base=stochastic_dominance(lower.joint, base.joint),
        base_below_upper=stochastic_dominance(base.joint, upper.joint),
        tv_base=tv_distance(base.joint, target),
        tv_lower=tv_distance(lower.joint, target),
        tv_upper=tv_distance(upper.joint, target),
        limit_tv_lower=tv_distance(tilted_product(family, lam_lo, ell), target),
        limit_tv_upper=tv_distance(tilted_product(family, lam_hi, ell), target),
    )
