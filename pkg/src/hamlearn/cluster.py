"""Connected-cluster enumeration and the truncated Heisenberg expansion.

For ``U = U_K ... U_1`` the conjugated observable is

    U^dag O U = U_1^dag ... U_K^dag O U_K ... U_1,

and each factor expands as ``exp(iHt) O exp(-iHt) = sum_m (it)^m/m! ad_H^m O``.
Collecting products of these series by total order gives a sum over clusters
(multisets of Hamiltonian terms); only clusters whose terms chain together
and reach the observable's support survive the nested commutators.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as iproduct
from typing import Iterator

from .errors import CapacityError
from .hamiltonian import EvolutionPlan, InteractionGraph
from .pauli import PauliSum, PauliTerm, commutator

DEFAULT_MAX_ORDER = 8
DEFAULT_KAPPA = 0.5
DEFAULT_TERM_CAP = 1 << 22
SATURATED = sys.maxsize


@dataclass(frozen=True)
class Cluster:
    """Multiset of interaction-graph vertices (term indices across all steps)."""

    vertices: tuple[int, ...]
    multiplicities: tuple[int, ...]

    @property
    def size(self) -> int:
        return sum(self.multiplicities)

    def per_step(self, graph: InteractionGraph) -> list[list[tuple[int, int]]]:
        """``W_k`` as lists of ``(vertex, multiplicity)`` for k = 0..K-1."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(graph.K)]
        for v, mult in zip(self.vertices, self.multiplicities):
            out[graph.steps[v]].append((v, mult))
        return out

    def support(self, graph: InteractionGraph) -> frozenset[int]:
        return frozenset().union(*(graph.supports[v] for v in self.vertices))

    def sort_key(self):
        return (self.size, self.vertices, self.multiplicities)


@dataclass(frozen=True)
class TruncationPlan:
    epsilon_prime: float
    M: int
    regime: str
    kappa: float
    t_star: float
    t: float
    K: int
    degree: int
    M_formula: int
    locality: int = 1

    def bound(self, M: int | None = None) -> float:
        """Operator-norm bound on the truncation error at order ``M``."""
        M = self.M if M is None else M
        if self.regime == "short_time":
            return truncation_bound(self.t, self.K, self.degree, M)
        return constant_time_residual(M, self.t, self.K, self.degree, self.kappa)

    def with_order(self, M: int) -> "TruncationPlan":
        if M < 1:
            raise ValueError("truncation order must be >= 1")
        return TruncationPlan(self.epsilon_prime, int(M), self.regime, self.kappa, self.t_star,
                              self.t, self.K, self.degree, self.M_formula, self.locality)


def short_time_order(t: float, K: int, degree: int, eps_prime: float) -> int:
    x = 2 * t * math.e * K * degree
    if x <= 0:
        return 1
    if x >= 1:
        raise ValueError("short-time formula requires t < t*")
    value = (math.log(1 / eps_prime) - K * math.log(1 - x)) / (K * math.log(1 / x))
    return max(1, math.ceil(value))


def constant_time_order(t: float, K: int, degree: int, eps_prime: float, kappa: float) -> int:
    a = math.pi * t * math.e * K * degree / kappa
    if a <= 0:
        return 1
    ea = math.exp(a)
    value = ea * math.log((ea - 1) / ((1 - kappa) ** K * eps_prime))
    if not math.isfinite(value) or value > SATURATED:
        return SATURATED
    return max(1, math.ceil(value))


def constant_time_residual(M: int, t: float, K: int, degree: int, kappa: float) -> float:
    """Residual ``(1-kappa)^-K (1-e^-a)^M (e^a - 1)`` with ``a = pi t e K d / kappa``."""
    a = math.pi * t * math.e * K * degree / kappa
    if a == 0:
        return 0.0
    return (1 - math.exp(-a)) ** M * math.expm1(a) / (1 - kappa) ** K


def truncation_bound(t: float, K: int, degree: int, M: int) -> float:
    """``(2teKd)^{K(M+1)} / (1-2teKd)^K``; infinite outside the short-time regime."""
    x = 2 * t * math.e * K * degree
    if x >= 1:
        return math.inf
    return x ** (K * (M + 1)) / (1 - x) ** K


def truncation_order(plan: EvolutionPlan, eps_prime: float, kappa: float = DEFAULT_KAPPA,
                     max_order: int = DEFAULT_MAX_ORDER) -> TruncationPlan:
    """Pick the truncation order for ``plan`` at target error ``eps_prime``.

    ``M_formula`` is the raw (clamped to >= 1) value; ``M`` is additionally capped
    at ``max_order``.
    """
    if not 0 < eps_prime < 1:
        raise ValueError(f"eps_prime must lie in (0, 1), got {eps_prime}")
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    K, d, t = plan.K, plan.degree, plan.t
    t_star = plan.t_star
    if d == 0:
        regime, raw = "short_time", 1
    elif t < t_star:
        regime, raw = "short_time", short_time_order(t, K, d, eps_prime)
    else:
        regime, raw = "constant_time", constant_time_order(t, K, d, eps_prime, kappa)
    return TruncationPlan(eps_prime, min(raw, max_order), regime, kappa, t_star, t, K, d, raw,
                          plan.locality)


def term_count_bound(M: int, K: int, locality: int, degree: int) -> int:
    """``ceil(4^{K L M} (e d)^M)``, with the degree factor dropped when ``d = 0``."""
    log_val = K * locality * M * math.log(4)
    if degree > 0:
        log_val += M * (1 + math.log(degree))
    if log_val >= math.log(SATURATED):
        return SATURATED
    value = 4 ** (K * locality * M) * ((math.e * degree) ** M if degree > 0 else 1)
    return min(SATURATED, math.ceil(value - 1e-9 * value))


# ---------------------------------------------------------------------------
# enumeration


def connected_vertex_sets(graph: InteractionGraph, o_support, max_size: int) -> list[tuple[int, ...]]:
    """All sets of distinct vertices, size <= max_size, connected to ``o_support``."""
    seeds = graph.touching(o_support)
    found: set[frozenset[int]] = set()
    frontier = [frozenset([v]) for v in seeds]
    found.update(frontier)
    for _ in range(max_size - 1):
        nxt = []
        for s in frontier:
            border = {u for v in s for u in graph.adjacency[v]} | set(seeds)
            for u in border - s:
                grown = s | {u}
                if grown not in found:
                    found.add(grown)
                    nxt.append(grown)
        frontier = nxt
    return sorted((tuple(sorted(s)) for s in found), key=lambda s: (len(s), s))


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Tuples of ``parts`` positive integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_clusters(graph: InteractionGraph, o_support, M: int) -> Iterator[Cluster]:
    """Connected clusters of total size ``m <= M`` in lexicographic order."""
    if M < 1:
        raise ValueError("M must be >= 1")
    out = []
    for verts in connected_vertex_sets(graph, o_support, M):
        for m in range(len(verts), M + 1):
            for mults in _compositions(m, len(verts)):
                out.append(Cluster(verts, mults))
    out.sort(key=Cluster.sort_key)
    yield from out


def lightcone(graph: InteractionGraph, qubits, M: int) -> frozenset[int]:
    """Qubits reachable from ``qubits`` through at most ``M`` chained terms."""
    region = set(qubits)
    dist = {v: 1 for v in graph.touching(qubits)}
    frontier = list(dist)
    while frontier:
        nxt = []
        for v in frontier:
            region |= graph.supports[v]
            if dist[v] < M:
                for u in graph.adjacency[v]:
                    if u not in dist:
                        dist[u] = dist[v] + 1
                        nxt.append(u)
        frontier = nxt
    return frozenset(region)


# ---------------------------------------------------------------------------
# expansion


def _step_hamiltonians(graph: InteractionGraph) -> list[PauliSum]:
    hams = [PauliSum.zero(graph.n) for _ in range(graph.K)]
    for v, op in enumerate(graph.operators):
        hams[graph.steps[v]] = hams[graph.steps[v]] + op
    return hams


def _check_capacity(plan: EvolutionPlan, o: PauliTerm, M: int, cap: int):
    region = lightcone(plan.graph, o.support, M)
    predicted = min(term_count_bound(M, plan.K, plan.locality, plan.degree), 4 ** len(region))
    if predicted > cap:
        raise CapacityError(
            f"predicted {predicted} Pauli terms for order {M} exceeds cap {cap}"
        )


def _check_observable(plan: EvolutionPlan, o: PauliTerm):
    if o.n != plan.n:
        raise ValueError(f"observable on {o.n} qubits, plan has {plan.n}")


def heisenberg_orders(plan: EvolutionPlan, o: PauliTerm, M: int,
                      cap: int = DEFAULT_TERM_CAP) -> list[PauliSum]:
    """Graded pieces ``[V^(0), ..., V^(M)]`` of the expansion of ``U^dag O U``.

    ``V^(j)`` collects every cluster of total size ``j``; partial sums give the
    truncated operator at each order.
    """
    _check_observable(plan, o)
    _check_capacity(plan, o, M, cap)
    base = o.to_sum()
    if o.is_identity:
        return [base] + [PauliSum.zero(plan.n)] * M
    hams = _step_hamiltonians(plan.graph)
    layers = [base] + [PauliSum.zero(plan.n)] * M
    for k in reversed(range(plan.K)):
        h, tk = hams[k], plan.times[k]
        new = [PauliSum.zero(plan.n) for _ in range(M + 1)]
        for j0, piece in enumerate(layers):
            acc = piece
            new[j0] = new[j0] + acc
            for a in range(1, M - j0 + 1):
                if not len(acc):
                    break
                acc = commutator(h, acc) * (1j * tk / a)
                if len(acc) > cap:
                    raise CapacityError(f"intermediate sum of {len(acc)} terms exceeds cap {cap}")
                new[j0 + a] = new[j0 + a] + acc
        layers = new
    return [layer.real(tol=1e-8) for layer in layers]


def truncated_heisenberg(plan: EvolutionPlan, o: PauliTerm, trunc: TruncationPlan | int,
                         cap: int = DEFAULT_TERM_CAP) -> PauliSum:
    """Truncated cluster expansion of ``U^dag O U`` up to total order ``M``."""
    M = trunc if isinstance(trunc, int) else trunc.M
    total = PauliSum.zero(plan.n)
    for piece in heisenberg_orders(plan, o, M, cap):
        total = total + piece
    return total


def heisenberg_from_clusters(plan: EvolutionPlan, o: PauliTerm, M: int) -> PauliSum:
    """Same expansion as :func:`truncated_heisenberg`, summed cluster by cluster.

    Each cluster contributes, step by step from the innermost (last) step,
    ``(i t_k)^{m_k}/m_k!`` times the sum over distinct orderings of its step
    multiset of nested commutators.  Slow, used as an independent cross-check.
    """
    _check_observable(plan, o)
    graph = plan.graph
    total = o.to_sum()
    if o.is_identity:
        return total
    for cl in enumerate_clusters(graph, o.support, M):
        acc = o.to_sum()
        for k, wk in reversed(list(enumerate(cl.per_step(graph)))):
            if not wk:
                continue
            acc = _ordered_chain_sum(graph, wk, acc)
            mk = sum(mult for _, mult in wk)
            acc = acc * ((1j * plan.times[k]) ** mk / math.factorial(mk))
            if not len(acc):
                break
        total = total + acc
    return total.real(tol=1e-8)


def _ordered_chain_sum(graph: InteractionGraph, wk, base: PauliSum) -> PauliSum:
    verts = [v for v, _ in wk]
    start = tuple(mult for _, mult in wk)

    @lru_cache(maxsize=None)
    def chains(rem: tuple[int, ...]) -> PauliSum:
        if not any(rem):
            return base
        out = PauliSum.zero(graph.n)
        for j, r in enumerate(rem):
            if r:
                inner = chains(rem[:j] + (r - 1,) + rem[j + 1:])
                out = out + commutator(graph.operators[verts[j]], inner)
        return out

    return chains(start)


def cluster_count_by_size(graph: InteractionGraph, o_support, M: int) -> dict[int, int]:
    counts = {m: 0 for m in range(1, M + 1)}
    for cl in enumerate_clusters(graph, o_support, M):
        counts[cl.size] += 1
    return counts


def all_single_qubit_observables(n: int) -> list[tuple[int, str, PauliTerm]]:
    return [(i, letter, PauliTerm.single(n, i, letter)) for i, letter in iproduct(range(n), "XYZ")]


def growth_bound(K: int, degree: int, m: int) -> float:
    return (math.e * K * degree) ** m


__all__ = [
    "Cluster",
    "TruncationPlan",
    "truncation_order",
    "enumerate_clusters",
    "truncated_heisenberg",
    "heisenberg_orders",
    "heisenberg_from_clusters",
    "term_count_bound",
    "truncation_bound",
    "constant_time_residual",
    "lightcone",
]
