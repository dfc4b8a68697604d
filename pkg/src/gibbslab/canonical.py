"""Canonical measures, their mixtures, and exact stochastic-dominance checks.

Dominance ``mu < mu'`` (coordinatewise) is decided as a flow problem on the
configuration lattice: the source feeds each configuration ``x`` with
``mu(x)``, uncapacitated edges ``x -> x + e_j`` carry mass upward, and each
configuration drains ``mu'(x)`` into the sink.  A unit of flow entering at
``x`` and leaving at ``y`` pairs ``x`` with some ``y >= x``, so a full flow is
a coupling supported on ordered pairs.  Otherwise the residual-reachable set
from the source is an up-set ``U`` with ``mu(U) > mu'(U)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import EmptyCondition, InstanceTooLarge, InvalidInput, InvalidParameter
from .pmf import Family, Pmf, check_log_concave, tilt
from .sumstats import Interval, sum_law_of

__all__ = [
    "MAX_CONFIGS",
    "DOMINANCE_TOL",
    "JointTable",
    "Upset",
    "DominanceResult",
    "EfronReport",
    "product_table",
    "canonical_marginal",
    "canonical_joint",
    "mixture_conditional",
    "stochastic_dominance",
    "efron_check",
    "proposition1_check",
]

MAX_CONFIGS = 2_000_000
DOMINANCE_TOL = 1e-9
MIXTURE_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class JointTable:
    """Dense joint law over ``prod_i {0..dims[i]-1}`` in log domain."""

    log_probs: np.ndarray

    def __post_init__(self):
        lp = np.array(self.log_probs, dtype=np.float64)
        lp.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.log_probs.shape

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def marginal(self, axis: int) -> np.ndarray:
        other = tuple(a for a in range(self.log_probs.ndim) if a != axis)
        return np.exp(logsumexp(self.log_probs, axis=other)) if other else self.probs

    def support(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in idx) for idx in np.argwhere(np.isfinite(self.log_probs))]


def _config_count(members: Sequence[Pmf]) -> int:
    return math.prod(m.support_max + 1 for m in members)


def _check_cap(members: Sequence[Pmf], cap: int = MAX_CONFIGS) -> None:
    size = _config_count(members)
    if size > cap:
        raise InstanceTooLarge(f"{size} configurations exceed the dense cap of {cap}")


def product_table(members: Sequence[Pmf]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(log prod_i nu_i(x_i), sum_i x_i)`` as dense arrays."""
    lp = np.zeros(())
    total = np.zeros((), dtype=np.int64)
    for m in members:
        lp = np.add.outer(lp, m.log_probs)
        total = np.add.outer(total, np.arange(m.support_max + 1))
    return lp, total


def canonical_joint(family: Family, n: int, k: int) -> JointTable:
    """``mu_n(x | k) = prod_i nu_i(x_i) 1{sum x = k} / pi_n(k)`` as a dense table."""
    members = family.take(n)
    _check_cap(members)
    lp, total = product_table(members)
    lp = np.where(total == k, lp, -np.inf)
    mass = logsumexp(lp)
    if mass == -np.inf:
        raise EmptyCondition(Interval.point(k), 1.0)
    return JointTable(lp - mass)


def canonical_marginal(family: Family, i: int, n: int, k: int) -> Pmf:
    """Law of ``X_i`` (0-based) under ``mu_n(. | k)`` via a leave-one-out sum law."""
    if not 0 <= i < n:
        raise InvalidParameter(f"index {i} outside 0..{n - 1}")
    members = family.take(n)
    full = sum_law_of(members)
    loo = sum_law_of(members[:i] + members[i + 1:])
    denom = full.log_prob(k)
    if denom == -math.inf:
        raise EmptyCondition(Interval.point(k), 1.0)
    nu = members[i]
    lp = np.array([nu.log_probs[x] + loo.log_prob(k - x) for x in range(nu.support_max + 1)])
    lp = lp - denom
    lp = lp - logsumexp(lp)
    return Pmf(lp, label=f"canonical_marginal(i={i}, n={n}, k={k})")


def mixture_conditional(family: Family, lam: float, n: int, interval: Interval) -> JointTable:
    """``P(X^lam_n = . | S^lam_n in I)`` as a mixture of canonical measures.

    The mixture ``sum_k pi^lam_n(k|I) mu_n(.|k)`` is built from convolved sum
    laws and compared with the directly conditioned tilted product; any
    disagreement beyond 1e-11 is an internal error.
    """
    family.check_lambda(lam)
    members = family.take(n)
    _check_cap(members)
    lp, total = product_table(members)

    tilted_law = sum_law_of(members, lam)
    base_law = sum_law_of(members, 1.0)
    log_mass = tilted_law.log_mass(interval)
    if log_mass == -math.inf:
        raise EmptyCondition(interval, 1.0)
    inside = np.zeros(tilted_law.k_max + 1, dtype=bool)
    a, b = interval.clip(tilted_law.k_max)
    inside[a: b + 1] = True

    weights = np.where(inside, tilted_law.log_probs - log_mass, -np.inf)
    with np.errstate(invalid="ignore"):
        mixture = weights[total] + lp - base_law.log_probs[total]
    mixture = np.where(inside[total], mixture, -np.inf)

    tilted_lp = np.zeros(())
    for m in members:
        tilted_lp = np.add.outer(tilted_lp, tilt(m, lam).log_probs)
    direct = np.where(inside[total], tilted_lp, -np.inf)
    direct = direct - logsumexp(direct)

    gap = float(np.max(np.abs(np.exp(mixture) - np.exp(direct))))
    if gap > MIXTURE_TOL:
        raise RuntimeError(f"mixture identity violated by {gap:.3e}")
    return JointTable(mixture)


@dataclass(frozen=True)
class Upset:
    """Up-set certificate: ``mass > mass_prime`` refutes dominance."""

    members: tuple[tuple[int, ...], ...]
    generators: tuple[tuple[int, ...], ...]
    mass: float
    mass_prime: float

    def to_dict(self) -> dict:
        return {
            "generators": [list(g) for g in self.generators],
            "members": [list(m) for m in self.members],
            "mass": self.mass,
            "mass_prime": self.mass_prime,
        }


@dataclass(frozen=True)
class DominanceResult:
    holds: bool
    flow: float
    witness_coupling: dict[tuple[tuple[int, ...], tuple[int, ...]], float] | None = None
    violation_certificate: Upset | None = None

    @property
    def gap(self) -> float:
        return 1.0 - self.flow

    def to_dict(self) -> dict:
        out: dict = {"holds": self.holds, "flow": self.flow, "gap": self.gap}
        if self.witness_coupling is not None:
            out["witness_coupling"] = [
                {"x": list(x), "x_prime": list(y), "mass": m}
                for (x, y), m in sorted(self.witness_coupling.items())
            ]
        if self.violation_certificate is not None:
            out["violation_certificate"] = self.violation_certificate.to_dict()
        return out


class _FlowNetwork:
    """Dinic max-flow on real capacities."""

    EPS = 1e-15

    def __init__(self, size: int):
        self.size = size
        self.head: list[list[int]] = [[] for _ in range(size)]
        self.to: list[int] = []
        self.cap: list[float] = []
        self.flow: list[float] = []

    def add_edge(self, u: int, v: int, cap: float) -> int:
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap)
        self.flow.append(0.0)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)
        self.flow.append(0.0)
        return len(self.to) - 2

    def _residual(self, e: int) -> float:
        return self.cap[e] - self.flow[e]

    def _levels(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.size
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if level[v] < 0 and self._residual(e) > self.EPS:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _augment(self, s: int, t: int, level: list[int], ptr: list[int]) -> float:
        # iterative DFS along the level graph
        path: list[int] = []
        u = s
        while True:
            if u == t:
                push = min(self._residual(e) for e in path)
                for e in path:
                    self.flow[e] += push
                    self.flow[e ^ 1] -= push
                return push
            advanced = False
            edges = self.head[u]
            while ptr[u] < len(edges):
                e = edges[ptr[u]]
                v = self.to[e]
                if level[v] == level[u] + 1 and self._residual(e) > self.EPS:
                    path.append(e)
                    u = v
                    advanced = True
                    break
                ptr[u] += 1
            if not advanced:
                if u == s:
                    return 0.0
                level[u] = -1  # dead end
                e = path.pop()
                u = self.to[e ^ 1]
                ptr[u] += 1

    def max_flow(self, s: int, t: int) -> float:
        total = 0.0
        while True:
            level = self._levels(s, t)
            if level is None:
                return total
            ptr = [0] * self.size
            while True:
                pushed = self._augment(s, t, level, ptr)
                if pushed <= self.EPS:
                    break
                total += pushed

    def reachable(self, s: int) -> list[bool]:
        seen = [False] * self.size
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if not seen[v] and self._residual(e) > self.EPS:
                    seen[v] = True
                    queue.append(v)
        return seen


def _up_closure(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for ax in range(out.ndim):
        out = np.logical_or.accumulate(out, axis=ax)
    return out


def _down_closure(mask: np.ndarray) -> np.ndarray:
    flipped = mask[(slice(None, None, -1),) * mask.ndim]
    return _up_closure(flipped)[(slice(None, None, -1),) * mask.ndim]


def _minimal_elements(points: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    out = []
    for p in points:
        if not any(q != p and all(a <= b for a, b in zip(q, p)) for q in points):
            out.append(p)
    return out


def stochastic_dominance(mu: JointTable, mu_prime: JointTable, tol: float = DOMINANCE_TOL) -> DominanceResult:
    """Decide whether ``mu_prime`` stochastically dominates ``mu``."""
    if mu.dims != mu_prime.dims:
        raise InvalidInput(f"dimension mismatch: {mu.dims} vs {mu_prime.dims}")
    p = mu.probs
    q = mu_prime.probs
    p = p / p.sum()
    q = q / q.sum()
    supp_p = p > 0
    supp_q = q > 0
    nodes_mask = _up_closure(supp_p) & _down_closure(supp_q)
    coords = [tuple(int(v) for v in c) for c in np.argwhere(nodes_mask)]
    index = {c: i + 2 for i, c in enumerate(coords)}
    source, sink = 0, 1
    net = _FlowNetwork(len(coords) + 2)
    src_edges: dict[tuple[int, ...], int] = {}
    sink_edges: dict[tuple[int, ...], int] = {}
    lattice_edges: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {}
    ndim = p.ndim
    for c in coords:
        u = index[c]
        if p[c] > 0:
            src_edges[c] = net.add_edge(source, u, float(p[c]))
        if q[c] > 0:
            sink_edges[c] = net.add_edge(u, sink, float(q[c]))
        for j in range(ndim):
            up = c[:j] + (c[j] + 1,) + c[j + 1:]
            v = index.get(up)
            if v is not None:
                lattice_edges[net.add_edge(u, v, math.inf)] = (c, up)
    flow = net.max_flow(source, sink)

    if flow >= 1.0 - tol:
        return DominanceResult(True, flow, witness_coupling=_decompose(net, index, src_edges, sink_edges, lattice_edges))

    seen = net.reachable(source)
    in_r = np.zeros(p.shape, dtype=bool)
    for c in coords:
        if seen[index[c]]:
            in_r[c] = True
    stranded = supp_p & ~nodes_mask
    upset = _up_closure(in_r | stranded)
    members = [tuple(int(v) for v in c) for c in np.argwhere(upset)]
    cert = Upset(
        members=tuple(members),
        generators=tuple(_minimal_elements(members)),
        mass=float(p[upset].sum()),
        mass_prime=float(q[upset].sum()),
    )
    return DominanceResult(False, flow, violation_certificate=cert)


def _decompose(net, index, src_edges, sink_edges, lattice_edges):
    """Split the flow into source-to-sink paths; each path pairs x <= y."""
    out_edges: dict[int, list[int]] = {}
    for e, (c, _) in lattice_edges.items():
        out_edges.setdefault(index[c], []).append(e)
    node_of = {i: c for c, i in index.items()}
    coupling: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
    residual_flow = {e: net.flow[e] for e in lattice_edges}
    sink_flow = {c: net.flow[e] for c, e in sink_edges.items()}
    for c, e in src_edges.items():
        remaining = net.flow[e]
        while remaining > _FlowNetwork.EPS:
            path = []
            u = index[c]
            # walk upward until a node still has sink capacity in use
            while sink_flow.get(node_of[u], 0.0) <= _FlowNetwork.EPS:
                nxt = next((le for le in out_edges.get(u, ()) if residual_flow[le] > _FlowNetwork.EPS), None)
                if nxt is None:
                    break
                path.append(nxt)
                u = net.to[nxt]
            end = node_of[u]
            amount = min([remaining, sink_flow.get(end, 0.0)] + [residual_flow[le] for le in path])
            if amount <= _FlowNetwork.EPS:
                break
            remaining -= amount
            sink_flow[end] -= amount
            for le in path:
                residual_flow[le] -= amount
            coupling[(c, end)] = coupling.get((c, end), 0.0) + amount
    return coupling


@dataclass(frozen=True)
class EfronReport:
    n: int
    k_values: tuple[int, ...]
    holds: tuple[bool, ...]
    flows: tuple[float, ...]
    method: str  # "max-flow" or "marginal-cdf" (necessary condition only)
    log_concave: tuple[bool, ...]
    certificates: tuple[Upset | None, ...] = field(default=())

    @property
    def all_hold(self) -> bool:
        return all(self.holds)

    @property
    def precondition_ok(self) -> bool:
        return all(self.log_concave)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "method": self.method,
            "precondition_log_concave": self.precondition_ok,
            "member_log_concave": list(self.log_concave),
            "all_hold": self.all_hold,
            "pairs": [
                {
                    "k": k,
                    "holds": h,
                    "flow": f,
                    "certificate": None if c is None else c.to_dict(),
                }
                for k, h, f, c in zip(self.k_values, self.holds, self.flows, self.certificates)
            ],
        }


def efron_check(family: Family, n: int, k_max: int, cap: int = MAX_CONFIGS) -> EfronReport:
    """Check ``mu_n(.|k) < mu_n(.|k+1)`` for ``k = 0..k_max-1``.

    Non-log-concave members are recorded but the check still runs.  Beyond
    the dense cap only the per-coordinate CDF orderings are tested, which is
    a necessary condition; ``method`` says which was used.
    """
    members = family.take(n)
    lc = tuple(check_log_concave(m).is_log_concave for m in members)
    top = min(k_max, sum(m.support_max for m in members))
    ks, holds, flows, certs = [], [], [], []
    exact = _config_count(members) <= cap
    for k in range(top):
        if exact:
            res = stochastic_dominance(canonical_joint(family, n, k), canonical_joint(family, n, k + 1))
            ok, flow, cert = res.holds, res.flow, res.violation_certificate
        else:
            ok, flow, cert = _marginal_cdf_check(family, n, k), math.nan, None
        ks.append(k)
        holds.append(ok)
        flows.append(flow)
        certs.append(cert)
    return EfronReport(
        n=n,
        k_values=tuple(ks),
        holds=tuple(holds),
        flows=tuple(flows),
        method="max-flow" if exact else "marginal-cdf",
        log_concave=lc,
        certificates=tuple(certs),
    )


def _marginal_cdf_check(family: Family, n: int, k: int, tol: float = DOMINANCE_TOL) -> bool:
    for i in range(n):
        a = np.cumsum(canonical_marginal(family, i, n, k).probs)
        b = np.cumsum(canonical_marginal(family, i, n, k + 1).probs)
        if np.any(b > a + tol):
            return False
    return True


_PROP1_MODES = ("both-above", "both-below", "below-above")


def proposition1_check(
    family: Family, lam: float, lam_prime: float, n: int, r: float, mode: str
) -> DominanceResult:
    """Compare the conditioned tilted laws at ``lam <= lam_prime``.

    ``both-above`` conditions both on ``S > r``, ``both-below`` both on
    ``S < r``, ``below-above`` the first on ``S < r`` and the second on
    ``S > r``.
    """
    if mode not in _PROP1_MODES:
        raise InvalidParameter(f"mode must be one of {_PROP1_MODES}, got {mode!r}")
    if lam > lam_prime:
        raise InvalidParameter(f"need lam <= lam_prime, got {lam} > {lam_prime}")
    first = Interval.above(r) if mode == "both-above" else Interval.below(r)
    second = Interval.below(r) if mode == "both-below" else Interval.above(r)
    low = mixture_conditional(family, lam, n, first)
    high = mixture_conditional(family, lam_prime, n, second)
    return stochastic_dominance(low, high)
