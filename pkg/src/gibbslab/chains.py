"""Continuous-time chains behind the monotone couplings.

Two families of processes are covered:

* birth-death chains on an integer interval ``I`` with birth rate ``lam`` and
  death rate ``pi(k-1)/pi(k)``, alone or coupled so that two copies with
  ``lam <= lam'`` stay ordered;
* zero-range / misanthrope particle systems where a particle leaves site
  ``i`` at rate ``g_i(x_i)`` and may not enter a full site, together with
  the basic coupling of two such systems.

Stationary laws are obtained by linear solves; trajectories by exact event
simulation driven by :func:`numpy.random.default_rng`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from .errors import InstanceTooLarge, InvalidParameter, MonotonicityUnavailable
from .pmf import Family, Pmf

__all__ = [
    "BirthDeathSpec",
    "CoupledBDSpec",
    "ZeroRangeSpec",
    "CtmcTrace",
    "DEFAULT_EVENT_CAP",
    "bd_generator",
    "bd_stationary",
    "coupled_bd_generator",
    "coupled_bd_transitions",
    "coupled_bd_stationary",
    "coupled_bd_simulate",
    "simulate_ctmc",
    "zr_spec_from_family",
    "zr_moves",
    "zr_generator",
    "basic_coupling_step_rates",
    "coupled_zr_simulate",
    "occupation",
    "batch_means",
]

DEFAULT_EVENT_CAP = 10_000_000
COUPLED_BD_MAX_STATES = 400


@dataclass(frozen=True)
class BirthDeathSpec:
    """Birth-death chain constrained to ``[lo, hi]``.

    Births happen at rate ``lam``; the death rate from ``k`` is
    ``pi(k-1)/pi(k)`` and does not depend on ``lam``.  Moves leaving the
    interval are suppressed.
    """

    base_law: Pmf
    lam: float
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidParameter(f"birth rate must be positive, got {self.lam}")
        if self.lo < 0 or self.hi < self.lo:
            raise InvalidParameter(f"empty or negative interval [{self.lo}, {self.hi}]")
        if self.hi > self.base_law.support_max:
            raise InvalidParameter(
                f"interval end {self.hi} beyond support_max {self.base_law.support_max}"
            )
        if not np.all(np.isfinite(self.base_law.log_probs[self.lo: self.hi + 1])):
            raise InvalidParameter("base law must be positive on the whole interval")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def states(self) -> range:
        return range(self.lo, self.hi + 1)

    def birth_rate(self, k: int) -> float:
        return self.lam if self.lo <= k < self.hi else 0.0

    def death_rate(self, k: int) -> float:
        if self.lo < k <= self.hi:
            lp = self.base_law.log_probs
            return float(math.exp(lp[k - 1] - lp[k]))
        return 0.0


@dataclass(frozen=True)
class CoupledBDSpec:
    """Two birth-death chains sharing death rates, with ``lam <= lam_prime``."""

    base_law: Pmf
    lam: float
    lam_prime: float
    lo: int
    hi: int

    def __post_init__(self):
        if self.lam > self.lam_prime:
            raise InvalidParameter(f"need lam <= lam_prime, got {self.lam} > {self.lam_prime}")
        # validates positivity and range
        BirthDeathSpec(self.base_law, self.lam, self.lo, self.hi)

    @property
    def first(self) -> BirthDeathSpec:
        return BirthDeathSpec(self.base_law, self.lam, self.lo, self.hi)

    @property
    def second(self) -> BirthDeathSpec:
        return BirthDeathSpec(self.base_law, self.lam_prime, self.lo, self.hi)


def bd_generator(spec: BirthDeathSpec) -> sparse.csr_matrix:
    """Tridiagonal generator on ``I``; row/column ``k - lo`` is state ``k``."""
    m = spec.size
    up = np.array([spec.birth_rate(k) for k in spec.states[:-1]])
    down = np.array([spec.death_rate(k) for k in spec.states[1:]])
    diag = np.zeros(m)
    diag[:-1] -= up
    diag[1:] -= down
    return sparse.diags([down, diag, up], offsets=[-1, 0, 1], shape=(m, m), format="csr")


def bd_stationary(spec: BirthDeathSpec) -> Pmf:
    """Stationary law from detailed balance, returned on ``0..hi`` (zero below ``lo``)."""
    lp = np.full(spec.hi + 1, -np.inf)
    acc = 0.0
    lp[spec.lo] = 0.0
    for k in range(spec.lo + 1, spec.hi + 1):
        # w(k) / w(k-1) = birth(k-1) / death(k)
        acc += math.log(spec.lam) - math.log(spec.death_rate(k))
        lp[k] = acc
    lp[spec.lo: spec.hi + 1] -= logsumexp(lp[spec.lo: spec.hi + 1])
    return Pmf(lp, label=f"bd_stationary(lam={spec.lam:g}, I=[{spec.lo},{spec.hi}])")


def coupled_bd_transitions(spec: CoupledBDSpec, state: tuple[int, int]) -> list[tuple[tuple[int, int], float]]:
    """Outgoing ``(next_state, rate)`` pairs of the order-preserving coupling."""
    k, kp = state
    lo, hi = spec.lo, spec.hi
    lam, lamp = spec.lam, spec.lam_prime
    q = spec.first.death_rate
    out = []
    if k == kp:
        if k + 1 <= hi:
            out.append(((k + 1, kp + 1), lam))
            if lamp > lam:
                out.append(((k, kp + 1), lamp - lam))
        if k - 1 >= lo:
            out.append(((k - 1, kp - 1), q(k)))
    else:
        if k + 1 <= hi:
            out.append(((k + 1, kp), lam))
        if kp + 1 <= hi:
            out.append(((k, kp + 1), lamp))
        if kp - 1 >= lo:
            out.append(((k, kp - 1), q(kp)))
        if k - 1 >= lo:
            out.append(((k - 1, kp), q(k)))
    return out


def coupled_bd_generator(spec: CoupledBDSpec) -> sparse.csr_matrix:
    """Generator on ``I x I``; state ``(k, k')`` has index ``(k-lo)*|I| + (k'-lo)``."""
    m = spec.hi - spec.lo + 1
    rows, cols, vals = [], [], []
    for k in range(spec.lo, spec.hi + 1):
        for kp in range(spec.lo, spec.hi + 1):
            src = (k - spec.lo) * m + (kp - spec.lo)
            total = 0.0
            for (a, b), rate in coupled_bd_transitions(spec, (k, kp)):
                rows.append(src)
                cols.append((a - spec.lo) * m + (b - spec.lo))
                vals.append(rate)
                total += rate
            rows.append(src)
            cols.append(src)
            vals.append(-total)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m * m, m * m))


def coupled_bd_stationary(spec: CoupledBDSpec, max_states: int = COUPLED_BD_MAX_STATES) -> np.ndarray:
    """Stationary law of the coupling as an ``|I| x |I|`` array.

    Solved on the full product space: the ordered pairs form the single
    closed class, so the balance system with one equation replaced by the
    normalization is nonsingular and the mass left on ``k > k'`` is a genuine
    numerical output rather than an assumption.
    """
    m = spec.hi - spec.lo + 1
    if m > max_states:
        raise InstanceTooLarge(f"|I| = {m} exceeds the dense-solve cap {max_states}")
    q = coupled_bd_generator(spec)
    a = q.T.tolil()
    a[0, :] = np.ones(m * m)
    rhs = np.zeros(m * m)
    rhs[0] = 1.0
    p = spsolve(a.tocsc(), rhs)
    return p.reshape(m, m)


@dataclass
class CtmcTrace:
    """Event record of one trajectory; ``states[i]`` holds from ``times[i]`` on."""

    seed: int | None
    times: list[float]
    states: list[Hashable]
    t_end: float
    capped: bool = False
    absorbed: bool = False

    @property
    def n_events(self) -> int:
        return len(self.times) - 1


def _matrix_transitions(q) -> Callable[[int], list[tuple[int, float]]]:
    q = sparse.csr_matrix(q)

    def transitions(state: int) -> list[tuple[int, float]]:
        start, end = q.indptr[state], q.indptr[state + 1]
        return [
            (int(j), float(r))
            for j, r in zip(q.indices[start:end], q.data[start:end])
            if j != state and r > 0
        ]

    return transitions


def simulate_ctmc(
    transitions,
    init: Hashable,
    t_end: float,
    seed: int | np.random.SeedSequence | None,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> CtmcTrace:
    """Exact event-by-event simulation.

    ``transitions`` is either a generator matrix (states are row indices) or
    a callable returning ``[(next_state, rate), ...]`` for a state.  Holding
    times are exponential with the total rate; the jump target is drawn in
    proportion to the rates.  A state with no outgoing rate is absorbing and
    ends the run.
    """
    if not t_end > 0:
        raise InvalidParameter(f"t_end must be positive, got {t_end}")
    if not callable(transitions):
        transitions = _matrix_transitions(transitions)
    rng = np.random.default_rng(seed)
    seed_record = seed if isinstance(seed, (int, type(None))) else int(seed.entropy)
    t = 0.0
    state = init
    times = [0.0]
    states = [init]
    capped = absorbed = False
    random = rng.random
    log = math.log
    while True:
        moves = transitions(state)
        total = 0.0
        for _, r in moves:
            total += r
        if total <= 0.0:
            absorbed = True
            break
        t -= log(1.0 - random()) / total
        if t >= t_end:
            break
        if len(times) - 1 >= event_cap:
            capped = True
            break
        u = random() * total
        acc = 0.0
        nxt = moves[-1][0]
        for target, r in moves:
            acc += r
            if u < acc:
                nxt = target
                break
        state = nxt
        times.append(t)
        states.append(state)
    return CtmcTrace(seed_record, times, states, float(t_end), capped=capped, absorbed=absorbed)


def occupation(trace: CtmcTrace, key: Callable[[Hashable], Hashable] = lambda s: s) -> dict:
    """Fraction of ``[0, t_end]`` spent in each ``key(state)``."""
    out: dict = {}
    ends = trace.times[1:] + [trace.t_end]
    for t0, t1, s in zip(trace.times, ends, trace.states):
        k = key(s)
        out[k] = out.get(k, 0.0) + (t1 - t0)
    return {k: v / trace.t_end for k, v in out.items()}


def batch_means(trace: CtmcTrace, indicator: Callable[[Hashable], float], batches: int = 50) -> tuple[float, float]:
    """Time average of ``indicator`` over ``[0, t_end]`` and its batch-means standard error."""
    if batches < 2:
        raise InvalidParameter(f"need at least 2 batches, got {batches}")
    times = np.asarray(trace.times + [trace.t_end])
    vals = np.array([indicator(s) for s in trace.states], dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(vals * np.diff(times))])
    edges = np.linspace(0.0, trace.t_end, batches + 1)
    idx = np.clip(np.searchsorted(times, edges, side="right") - 1, 0, vals.size - 1)
    integral = cum[idx] + vals[idx] * (edges - times[idx])
    means = np.diff(integral) / np.diff(edges)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def _count_violations(states, ordered: Callable) -> int:
    return sum(1 for s in states if not ordered(s))


def coupled_bd_simulate(
    spec: CoupledBDSpec,
    k0: int,
    k0_prime: int,
    t_end: float,
    seed,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> tuple[CtmcTrace, int]:
    """Simulate the coupling from ``(k0, k0_prime)``; returns the trace and the
    number of visited states with ``k > k'``."""
    for k in (k0, k0_prime):
        if not spec.lo <= k <= spec.hi:
            raise InvalidParameter(f"initial state {k} outside [{spec.lo}, {spec.hi}]")
    trace = simulate_ctmc(
        lambda s: coupled_bd_transitions(spec, s), (k0, k0_prime), t_end, seed, event_cap
    )
    return trace, _count_violations(trace.states, lambda s: s[0] <= s[1])


@dataclass(frozen=True)
class ZeroRangeSpec:
    """Zero-range / misanthrope system on ``n`` sites.

    ``g[i]`` maps an occupation to the departure rate of site ``i`` and must
    vanish at 0; ``maxes[i]`` is the capacity (``math.inf`` for none).
    """

    g: tuple[Callable[[int], float], ...]
    maxes: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "maxes", tuple(self.maxes))
        if len(self.g) != len(self.maxes) or not self.g:
            raise InvalidParameter("g and maxes must be nonempty and of equal length")
        for i, gi in enumerate(self.g):
            if gi(0) != 0:
                raise InvalidParameter(f"g_{i}(0) must be 0")

    @property
    def n(self) -> int:
        return len(self.g)

    def is_monotone(self, upto: int | None = None) -> bool:
        """Whether every ``g_i`` is nondecreasing on ``[0, min(max_i, upto)]``."""
        for gi, mx in zip(self.g, self.maxes):
            top = mx if upto is None else min(mx, upto)
            if not math.isfinite(top):
                raise InvalidParameter("need a finite bound to check monotonicity")
            vals = [gi(z) for z in range(int(top) + 1)]
            # ratios computed from logs carry ~1e-15 relative noise
            if any(b < a - 1e-12 * max(1.0, abs(a)) for a, b in zip(vals, vals[1:])):
                return False
        return True

    def valid(self, x: Sequence[int]) -> bool:
        return len(x) == self.n and all(0 <= v <= m for v, m in zip(x, self.maxes))


def _table_rate(table: np.ndarray) -> Callable[[int], float]:
    values = [float(v) for v in table]

    def g(z: int) -> float:
        return values[z] if 0 <= z < len(values) else 0.0

    return g


def zr_spec_from_family(family: Family, n: int) -> ZeroRangeSpec:
    """Rates ``g_i(z) = nu_i(z-1)/nu_i(z)`` on ``[1, max_i]`` with capacity ``max_i``.

    Truncated infinite-support laws use their truncation point as capacity.
    """
    gs, maxes = [], []
    for m in family.take(n):
        top = m.last_positive
        lp = m.log_probs[: top + 1]
        if not np.all(np.isfinite(lp)):
            raise InvalidParameter("rates need nu_i > 0 on [0, max_i]")
        table = np.zeros(top + 1)
        table[1:] = np.exp(lp[:-1] - lp[1:])
        gs.append(_table_rate(table))
        maxes.append(top)
    return ZeroRangeSpec(tuple(gs), tuple(float(v) for v in maxes))


def _theta(x: tuple[int, ...], i: int, j: int) -> tuple[int, ...]:
    z = list(x)
    z[i] -= 1
    z[j] += 1
    return tuple(z)


def zr_moves(spec: ZeroRangeSpec, x: Sequence[int]) -> list[tuple[int, int, float]]:
    """All ``(i, j, g_i(x_i))`` with ``x_i > 0``, ``x_j < max_j`` and positive rate."""
    out = []
    n = spec.n
    for i in range(n):
        if x[i] <= 0:
            continue
        rate = spec.g[i](x[i])
        if rate <= 0:
            continue
        for j in range(n):
            if j != i and x[j] < spec.maxes[j]:
                out.append((i, j, rate))
    return out


def zr_generator(spec: ZeroRangeSpec) -> Callable[[tuple[int, ...]], list[tuple[tuple[int, ...], float]]]:
    """Transition function ``x -> [(theta^{ij} x, rate), ...]`` for :func:`simulate_ctmc`."""

    def transitions(x):
        x = tuple(x)
        return [(_theta(x, i, j), r) for i, j, r in zr_moves(spec, x)]

    return transitions


def basic_coupling_step_rates(
    spec: ZeroRangeSpec, x: Sequence[int], xp: Sequence[int]
) -> list[tuple[tuple[int, ...], tuple[int, ...], float, int]]:
    """Outgoing moves ``(z, z', rate, clause)`` of the basic coupling.

    Clauses: 1 joint move (both destinations free), 2 lone move of the
    second system when only the first is blocked, 3 lone move of the first
    when only the second is blocked, 4 excess lone move of the second at
    ``(g(x'_i) - g(x_i))^+``, 5 excess lone move of the first at
    ``(g(x_i) - g(x'_i))^+``.
    """
    x, xp = tuple(x), tuple(xp)
    out = []
    n = spec.n
    for i in range(n):
        a = spec.g[i](x[i]) if x[i] > 0 else 0.0
        b = spec.g[i](xp[i]) if xp[i] > 0 else 0.0
        both = min(a, b)
        for j in range(n):
            if j == i:
                continue
            free = x[j] < spec.maxes[j]
            free_p = xp[j] < spec.maxes[j]
            if both > 0:
                if free and free_p:
                    out.append((_theta(x, i, j), _theta(xp, i, j), both, 1))
                elif free_p:
                    out.append((x, _theta(xp, i, j), both, 2))
                elif free:
                    out.append((_theta(x, i, j), xp, both, 3))
            if b > a and free_p:
                out.append((x, _theta(xp, i, j), b - a, 4))
            if a > b and free:
                out.append((_theta(x, i, j), xp, a - b, 5))
    return out


def _leq(x: Sequence[int], y: Sequence[int]) -> bool:
    return all(a <= b for a, b in zip(x, y))


def coupled_zr_simulate(
    spec: ZeroRangeSpec,
    x0: Sequence[int],
    x0_prime: Sequence[int],
    t_end: float,
    seed,
    event_cap: int = DEFAULT_EVENT_CAP,
    allow_nonmonotone: bool = False,
) -> tuple[CtmcTrace, int]:
    """Simulate the basic coupling; returns the trace and the count of
    visited pairs that are not coordinatewise ordered.

    States are ``(x, x')`` tuple pairs.  Requires ``x0 <= x0'`` and
    nondecreasing rates unless ``allow_nonmonotone`` is set.
    """
    x0, x0_prime = tuple(int(v) for v in x0), tuple(int(v) for v in x0_prime)
    if not (spec.valid(x0) and spec.valid(x0_prime)):
        raise InvalidParameter("initial configurations violate site capacities")
    if not allow_nonmonotone:
        if not _leq(x0, x0_prime):
            raise InvalidParameter("initial configurations must be ordered x0 <= x0'")
        bound = max(sum(x0), sum(x0_prime))
        if not spec.is_monotone(upto=bound):
            raise MonotonicityUnavailable(
                "rates are not nondecreasing; pass allow_nonmonotone=True to explore"
            )

    trace = _run_basic_coupling(spec, x0, x0_prime, t_end, seed, event_cap)
    return trace, _count_violations(trace.states, lambda s: _leq(s[0], s[1]))


def _merged_coupling_moves(g, mx, x, xp) -> tuple[list[float], list[tuple[int, int, int]]]:
    """Basic-coupling moves with identical jumps merged; kind 0 joint, 1 first only, 2 second only."""
    n = len(g)
    rates: list[float] = []
    moves: list[tuple[int, int, int]] = []  # (kind, i, j): 0 joint, 1 first, 2 second
    for i in range(n):
        a = g[i](x[i]) if x[i] > 0 else 0.0
        b = g[i](xp[i]) if xp[i] > 0 else 0.0
        if a <= 0.0 and b <= 0.0:
            continue
        both = a if a < b else b
        for j in range(n):
            if j == i:
                continue
            free = x[j] < mx[j]
            free_p = xp[j] < mx[j]
            if free and free_p:
                if both > 0.0:
                    rates.append(both)
                    moves.append((0, i, j))
                if a > b:
                    rates.append(a - b)
                    moves.append((1, i, j))
                elif b > a:
                    rates.append(b - a)
                    moves.append((2, i, j))
            elif free_p:
                if b > 0.0:
                    rates.append(b)
                    moves.append((2, i, j))
            elif free:
                if a > 0.0:
                    rates.append(a)
                    moves.append((1, i, j))
    return rates, moves


def _run_basic_coupling(spec, x0, x0_prime, t_end, seed, event_cap) -> CtmcTrace:
    """Event loop for the basic coupling.

    Same dynamics as feeding :func:`basic_coupling_step_rates` to
    :func:`simulate_ctmc`, with clauses 2/4 and 3/5 merged per target
    (they produce identical jumps) and states built only for the chosen move.
    """
    if not t_end > 0:
        raise InvalidParameter(f"t_end must be positive, got {t_end}")
    rng = np.random.default_rng(seed)
    random = rng.random
    log = math.log
    g = spec.g
    mx = spec.maxes
    x, xp = list(x0), list(x0_prime)
    times = [0.0]
    states = [(tuple(x), tuple(xp))]
    t = 0.0
    capped = absorbed = False
    while True:
        rates, moves = _merged_coupling_moves(g, mx, x, xp)
        total = sum(rates)
        if total <= 0.0:
            absorbed = True
            break
        t -= log(1.0 - random()) / total
        if t >= t_end:
            break
        if len(times) - 1 >= event_cap:
            capped = True
            break
        u = random() * total
        acc = 0.0
        pick = len(rates) - 1
        for idx, r in enumerate(rates):
            acc += r
            if u < acc:
                pick = idx
                break
        kind, i, j = moves[pick]
        if kind != 2:
            x[i] -= 1
            x[j] += 1
        if kind != 1:
            xp[i] -= 1
            xp[j] += 1
        times.append(t)
        states.append((tuple(x), tuple(xp)))
    seed_record = seed if isinstance(seed, (int, type(None))) else int(seed.entropy)
    return CtmcTrace(seed_record, times, states, float(t_end), capped=capped, absorbed=absorbed)
