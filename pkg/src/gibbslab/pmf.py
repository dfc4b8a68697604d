"""Discrete distributions on the nonnegative integers and their exponential tilts.

A :class:`Pmf` stores log-probabilities for ``x = 0..support_max``.  Exact
zeros are stored as ``-inf``.  Distributions with infinite support are
truncated so that the tilted tail at a declared working cap ``lambda_cap``
stays below ``trunc_eps``; since tilted families are stochastically
increasing in the tilt, the same bound then covers every tilt up to the cap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .errors import InvalidDistribution, InvalidParameter, SchemaError

__all__ = [
    "Pmf",
    "Family",
    "LogConcavityReport",
    "DEFAULT_TRUNC_EPS",
    "pmf_from_weights",
    "pmf_builtin",
    "check_log_concave",
    "partition_function",
    "lambda_max",
    "tilt",
    "moments",
    "family_from_spec",
    "load_family",
]

DEFAULT_TRUNC_EPS = 1e-13
# Working cap for kinds with infinite lambda_max when none is declared.
DEFAULT_INFINITE_CAP = 4.0
_CAP_FRACTION = 0.95
_CAP_SLACK = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function on ``{0, ..., support_max}`` in log domain.

    Attributes:
        log_probs: log-probabilities, ``-inf`` marks an exact zero.
        tail_mass_bound: bound on the mass dropped by truncation, valid for
            every tilt up to ``lambda_cap``.
        is_truncated: whether the underlying law had larger support.
        lambda_max: radius of convergence of the untruncated law's
            generating function.
        lambda_cap: largest tilt for which the truncation is certified.
        label: free-form description, e.g. ``"geometric(p=0.5)"``.
    """

    log_probs: np.ndarray
    tail_mass_bound: float = 0.0
    is_truncated: bool = False
    lambda_max: float = math.inf
    lambda_cap: float = math.inf
    label: str = ""

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 1 or lp.size == 0:
            raise InvalidDistribution("log_probs must be a nonempty 1-D vector")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise InvalidDistribution("log_probs must be finite or -inf")
        if not np.isfinite(lp).any():
            raise InvalidDistribution("distribution has no mass")
        object.__setattr__(self, "log_probs", _frozen(lp))

    @property
    def support_max(self) -> int:
        return self.log_probs.size - 1

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def last_positive(self) -> int:
        return int(np.flatnonzero(np.isfinite(self.log_probs))[-1])

    @property
    def first_positive(self) -> int:
        return int(np.flatnonzero(np.isfinite(self.log_probs))[0])

    def prob(self, x: int) -> float:
        if 0 <= x <= self.support_max:
            return float(np.exp(self.log_probs[x]))
        return 0.0

    def __repr__(self) -> str:
        name = self.label or "Pmf"
        return f"<{name} support_max={self.support_max} tail<={self.tail_mass_bound:.1e}>"


@dataclass(frozen=True)
class LogConcavityReport:
    is_log_concave: bool
    first_violation: tuple[int, float, float] | None = None
    has_internal_zero: bool = False


def _normalized(lp: np.ndarray) -> np.ndarray:
    return lp - logsumexp(lp)


def pmf_from_weights(weights: Iterable[float], label: str = "") -> Pmf:
    """Normalize a finite vector of nonnegative weights into a :class:`Pmf`."""
    w = np.asarray(list(weights), dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidDistribution("weights must be a nonempty vector")
    if not np.all(np.isfinite(w)):
        raise InvalidDistribution("weights must be finite")
    if np.any(w < 0):
        raise InvalidDistribution("negative weight")
    if not np.any(w > 0):
        raise InvalidDistribution("all weights are zero")
    with np.errstate(divide="ignore"):
        lp = np.log(w)
    return Pmf(_normalized(lp), label=label or f"weights({w.size})")


def _check_eps(trunc_eps: float) -> None:
    if not (0 < trunc_eps <= 1e-6):
        raise InvalidParameter(f"trunc_eps must lie in (0, 1e-6], got {trunc_eps}")


def _resolve_cap(lam_max: float, lambda_cap: float | None) -> float:
    if lambda_cap is None:
        return _CAP_FRACTION * lam_max if math.isfinite(lam_max) else DEFAULT_INFINITE_CAP
    if not lambda_cap > 0:
        raise InvalidParameter(f"lambda_cap must be positive, got {lambda_cap}")
    if lambda_cap >= lam_max:
        raise InvalidParameter(
            f"lambda_cap={lambda_cap} must be below lambda_max={lam_max}"
        )
    return float(lambda_cap)


def pmf_builtin(
    kind: str,
    *,
    trunc_eps: float = DEFAULT_TRUNC_EPS,
    lambda_cap: float | None = None,
    **params: float,
) -> Pmf:
    """Build one of the stock distributions.

    Supported kinds and parameters: ``geometric(p)`` with ``P(x) = (1-p) p^x``,
    ``poisson(mu)``, ``binomial(m, q)``, ``bernoulli(q)`` and ``uniform(m)``
    on ``{0..m}``.  Infinite-support kinds are truncated at the smallest
    ``support_max`` whose tail under the tilt ``lambda_cap`` is at most
    ``trunc_eps``.
    """
    _check_eps(trunc_eps)
    try:
        if kind == "geometric":
            return _geometric(float(params["p"]), trunc_eps, lambda_cap)
        if kind == "poisson":
            return _poisson(float(params["mu"]), trunc_eps, lambda_cap)
        if kind == "binomial":
            return _binomial(params["m"], float(params["q"]))
        if kind == "bernoulli":
            return _binomial(1, float(params["q"]), label=f"bernoulli(q={params['q']})")
        if kind == "uniform":
            m = params["m"]
            if int(m) != m or m < 0:
                raise InvalidParameter(f"uniform needs integer m >= 0, got {m}")
            return Pmf(np.full(int(m) + 1, -math.log(int(m) + 1)), label=f"uniform(m={int(m)})")
    except KeyError as exc:
        raise InvalidParameter(f"{kind} is missing parameter {exc.args[0]!r}") from None
    raise InvalidParameter(f"unknown distribution kind {kind!r}")


def _geometric(p: float, eps: float, lambda_cap: float | None) -> Pmf:
    if not 0 < p < 1:
        raise InvalidParameter(f"geometric needs 0 < p < 1, got {p}")
    lam_max = 1.0 / p
    cap = _resolve_cap(lam_max, lambda_cap)
    ratio = cap * p  # tilted law at the cap is geometric with this ratio
    # P(X > N) = ratio^(N+1) <= eps
    n_max = max(0, math.ceil(math.log(eps) / math.log(ratio)) - 1)
    while ratio ** (n_max + 1) > eps:
        n_max += 1
    x = np.arange(n_max + 1)
    lp = math.log1p(-p) + x * math.log(p)
    return Pmf(
        _normalized(lp),
        tail_mass_bound=ratio ** (n_max + 1),
        is_truncated=True,
        lambda_max=lam_max,
        lambda_cap=cap,
        label=f"geometric(p={p})",
    )


def _poisson(mu: float, eps: float, lambda_cap: float | None) -> Pmf:
    if not mu > 0:
        raise InvalidParameter(f"poisson needs mu > 0, got {mu}")
    cap = _resolve_cap(math.inf, lambda_cap)
    tilted = stats.poisson(cap * mu)  # tilting poisson(mu) by cap gives poisson(cap*mu)
    n_max = int(tilted.isf(eps))
    while tilted.sf(n_max) > eps:
        n_max += 1
    while n_max > 0 and tilted.sf(n_max - 1) <= eps:
        n_max -= 1
    x = np.arange(n_max + 1)
    lp = x * math.log(mu) - mu - gammaln(x + 1)
    return Pmf(
        _normalized(lp),
        tail_mass_bound=float(tilted.sf(n_max)),
        is_truncated=True,
        lambda_max=math.inf,
        lambda_cap=cap,
        label=f"poisson(mu={mu})",
    )


def _binomial(m: float, q: float, label: str = "") -> Pmf:
    if int(m) != m or m < 0:
        raise InvalidParameter(f"binomial needs integer m >= 0, got {m}")
    if not 0 < q < 1:
        raise InvalidParameter(f"binomial needs 0 < q < 1, got {q}")
    m = int(m)
    x = np.arange(m + 1)
    lp = gammaln(m + 1) - gammaln(x + 1) - gammaln(m - x + 1) + x * math.log(q) + (m - x) * math.log1p(-q)
    return Pmf(_normalized(lp), label=label or f"binomial(m={m}, q={q})")


def check_log_concave(pmf: Pmf) -> LogConcavityReport:
    """Check positivity on ``[0, max]`` and ``nu(x)^2 >= nu(x-1) nu(x+1)``."""
    lp = pmf.log_probs
    top = pmf.last_positive
    body = lp[: top + 1]
    zero_idx = np.flatnonzero(~np.isfinite(body))
    has_zero = zero_idx.size > 0
    violation = None
    for x in range(1, top):
        left, mid, right = body[x - 1], body[x], body[x + 1]
        if not (np.isfinite(left) and np.isfinite(mid) and np.isfinite(right)):
            continue
        slack = 1e-12 * max(1.0, abs(left), abs(mid), abs(right))
        if 2.0 * mid < left + right - slack:
            # ratios nu(x-1)/nu(x) > nu(x)/nu(x+1)
            violation = (x, float(math.exp(left - mid)), float(math.exp(mid - right)))
            break
    if violation is None and has_zero:
        x = int(zero_idx[0])
        violation = (x, math.inf, 0.0)
    return LogConcavityReport(
        is_log_concave=violation is None and not has_zero,
        first_violation=violation,
        has_internal_zero=has_zero,
    )


def _check_lambda(lam: float, cap: float) -> None:
    if not lam > 0 or not math.isfinite(lam):
        raise InvalidParameter(f"tilt parameter must be positive and finite, got {lam}")
    if lam > cap * (1 + _CAP_SLACK):
        raise InvalidParameter(f"tilt {lam} exceeds the working cap {cap}")


def partition_function(pmf: Pmf, lam: float) -> float:
    """Return ``log Z^lam = log sum_x lam^x nu(x)`` over the stored support."""
    _check_lambda(lam, pmf.lambda_cap)
    x = np.arange(pmf.support_max + 1)
    return float(logsumexp(pmf.log_probs + x * math.log(lam)))


def tilt(pmf: Pmf, lam: float) -> Pmf:
    """Exponentially tilt ``pmf`` by ``lam``: ``nu^lam(x) = lam^x nu(x) / Z^lam``."""
    _check_lambda(lam, pmf.lambda_cap)
    if lam == 1.0:
        return pmf
    x = np.arange(pmf.support_max + 1)
    lp = pmf.log_probs + x * math.log(lam)
    return Pmf(
        _normalized(lp),
        tail_mass_bound=pmf.tail_mass_bound,
        is_truncated=pmf.is_truncated,
        lambda_max=pmf.lambda_max / lam,
        lambda_cap=pmf.lambda_cap / lam,
        label=f"{pmf.label}^{lam:g}" if pmf.label else "",
    )


def moments(pmf: Pmf) -> tuple[float, float]:
    p = pmf.probs
    x = np.arange(p.size, dtype=np.float64)
    mean = float(np.dot(p, x))
    var = float(np.dot(p, (x - mean) ** 2))
    return mean, var


@dataclass(frozen=True)
class Family:
    """An ordered list of base laws ``nu_1, nu_2, ...``.

    With ``cyclic=True`` the list repeats, so member ``i`` is
    ``members[i % len(members)]`` and any ``n`` is admissible.
    ``repeat`` is the default length used by experiments.
    """

    members: tuple[Pmf, ...]
    cyclic: bool = True
    repeat: int | None = None
    lambda_cap_override: float | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise InvalidParameter("family needs at least one member")
        lm = self.lambda_max
        if not lm > 0:
            raise InvalidParameter("lambda_max must be positive")

    @property
    def lambda_max(self) -> float:
        return min(m.lambda_max for m in self.members)

    @property
    def lambda_cap(self) -> float:
        cap = min(m.lambda_cap for m in self.members)
        if self.lambda_cap_override is not None:
            cap = min(cap, self.lambda_cap_override)
        return cap

    def member(self, i: int) -> Pmf:
        if self.cyclic:
            return self.members[i % len(self.members)]
        if i >= len(self.members):
            raise InvalidParameter(f"family has only {len(self.members)} members, asked for index {i}")
        return self.members[i]

    def take(self, n: int, start: int = 0) -> list[Pmf]:
        return [self.member(i) for i in range(start, n)]

    def check_lambda(self, lam: float) -> None:
        _check_lambda(lam, self.lambda_cap)

    def log_partitions(self, lam: float, n: int) -> np.ndarray:
        """Vector of ``log Z^lam_i`` for the first ``n`` members."""
        self.check_lambda(lam)
        cache: dict[int, float] = {}
        out = np.empty(n)
        for i in range(n):
            m = self.member(i)
            key = id(m)
            if key not in cache:
                cache[key] = partition_function(m, lam)
            out[i] = cache[key]
        return out

    def support_total(self, n: int) -> int:
        return sum(m.support_max for m in self.take(n))

    @classmethod
    def iid(cls, pmf: Pmf, repeat: int | None = None) -> "Family":
        return cls((pmf,), cyclic=True, repeat=repeat)


def lambda_max(family: Family) -> float:
    return family.lambda_max


_KIND_PARAMS = {
    "geometric": ("p",),
    "poisson": ("mu",),
    "binomial": ("m", "q"),
    "bernoulli": ("q",),
    "uniform": ("m",),
}


def family_from_spec(spec: Mapping[str, Any]) -> Family:
    """Build a :class:`Family` from the JSON-style mapping.

    Example::

        {"members": [{"kind": "geometric", "p": 0.5},
                     {"kind": "weights", "w": [1, 2, 1]}],
         "repeat": 100, "trunc_eps": 1e-13, "lambda_cap": 1.9}
    """
    if not isinstance(spec, Mapping):
        raise SchemaError("<root>", "family specification must be a JSON object")
    members = spec.get("members")
    if not isinstance(members, list) or not members:
        raise SchemaError("members", "must be a nonempty list")
    eps = spec.get("trunc_eps", DEFAULT_TRUNC_EPS)
    if not isinstance(eps, (int, float)) or isinstance(eps, bool):
        raise SchemaError("trunc_eps", "must be a number")
    cap = spec.get("lambda_cap")
    if cap is not None and (not isinstance(cap, (int, float)) or isinstance(cap, bool)):
        raise SchemaError("lambda_cap", "must be a number")
    repeat = spec.get("repeat")
    if repeat is not None and (not isinstance(repeat, int) or isinstance(repeat, bool) or repeat < 1):
        raise SchemaError("repeat", "must be a positive integer")
    unknown = set(spec) - {"members", "repeat", "trunc_eps", "lambda_cap"}
    if unknown:
        raise SchemaError(sorted(unknown)[0], "unknown field")

    pmfs = []
    for idx, m in enumerate(members):
        where = f"members[{idx}]"
        if not isinstance(m, Mapping):
            raise SchemaError(where, "must be an object")
        kind = m.get("kind")
        if kind == "weights":
            w = m.get("w")
            if not isinstance(w, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in w
            ):
                raise SchemaError(f"{where}.w", "must be a list of numbers")
            try:
                pmfs.append(pmf_from_weights(w))
            except InvalidDistribution as exc:
                raise SchemaError(f"{where}.w", str(exc)) from None
            continue
        if kind not in _KIND_PARAMS:
            raise SchemaError(f"{where}.kind", f"unknown kind {kind!r}")
        params = {}
        for name in _KIND_PARAMS[kind]:
            v = m.get(name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise SchemaError(f"{where}.{name}", "missing or not a number")
            params[name] = v
        extra = set(m) - {"kind", *_KIND_PARAMS[kind]}
        if extra:
            raise SchemaError(f"{where}.{sorted(extra)[0]}", "unknown field")
        # the family cap only matters for infinite-support kinds
        member_cap = cap if kind in ("geometric", "poisson") else None
        try:
            pmfs.append(pmf_builtin(kind, trunc_eps=eps, lambda_cap=member_cap, **params))
        except InvalidParameter as exc:
            raise SchemaError(where, str(exc)) from None
    return Family(tuple(pmfs), cyclic=True, repeat=repeat, lambda_cap_override=cap)


def load_family(path: str) -> Family:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("<root>", f"invalid JSON: {exc}") from None
    return family_from_spec(spec)
