"""K-step Hamiltonian evolution plans, their JSON schema and interaction graph.

A plan describes ``U = U_K ... U_2 U_1`` with ``U_k = exp(-i H_k t_k)``; step 1
acts on the state first.  Each ``H_k`` is a sum of weighted Pauli words
``coeff * P`` on small supports, with ``|coeff| <= 1`` (a Pauli word has unit
operator norm, so every term is bounded by one).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np

from .errors import ParseError
from .pauli import PauliSum

MAX_ABS_TIME = 100.0
SCHEMA_KEYS = {"n", "dimension", "coords", "steps"}


@dataclass(frozen=True)
class Term:
    """One weighted Pauli word ``coeff * pauli`` placed on ``qubits``."""

    qubits: tuple[int, ...]
    coeff: float
    pauli: str

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self.qubits)

    def operator(self, n: int) -> PauliSum:
        return PauliSum.from_word(n, self.qubits, self.pauli, self.coeff)


@dataclass(frozen=True)
class HamiltonianSpec:
    n: int
    terms: tuple[Term, ...]
    dimension: int = 1
    coords: tuple[tuple[int, ...], ...] | None = None

    @property
    def locality(self) -> int:
        return max(len(t.qubits) for t in self.terms)

    def operator(self) -> PauliSum:
        total = PauliSum.zero(self.n)
        for t in self.terms:
            total = total + t.operator(self.n)
        return total

    def dense(self) -> np.ndarray:
        return self.operator().to_dense()


@dataclass(frozen=True)
class EvolutionPlan:
    hams: tuple[HamiltonianSpec, ...]
    times: tuple[float, ...]

    def __post_init__(self):
        if not self.hams:
            raise ParseError("plan needs at least one step", "steps")
        if len(self.hams) != len(self.times):
            raise ParseError("one time per step required", "steps")
        if len({h.n for h in self.hams}) != 1:
            raise ParseError("all steps must share the qubit count", "steps")

    @property
    def n(self) -> int:
        return self.hams[0].n

    @property
    def K(self) -> int:
        return len(self.hams)

    @property
    def dimension(self) -> int:
        return self.hams[0].dimension

    @property
    def coords(self):
        return self.hams[0].coords

    @property
    def t(self) -> float:
        """Largest absolute step time."""
        return max(abs(x) for x in self.times)

    @property
    def locality(self) -> int:
        return max(h.locality for h in self.hams)

    @cached_property
    def graph(self) -> "InteractionGraph":
        return interaction_graph(self)

    @property
    def degree(self) -> int:
        return self.graph.max_degree

    @property
    def t_star(self) -> float:
        d = self.degree
        return math.inf if d == 0 else 1.0 / (2 * math.e * self.K * d)

    @property
    def short_time(self) -> bool:
        return self.t < self.t_star

    def all_terms(self) -> list[tuple[int, Term]]:
        """``(step index, term)`` pairs in graph vertex order."""
        return [(k, term) for k, h in enumerate(self.hams) for term in h.terms]

    def with_times(self, times: Sequence[float]) -> "EvolutionPlan":
        return EvolutionPlan(self.hams, tuple(float(t) for t in times))

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"n": self.n, "dimension": self.dimension}
        if self.coords is not None:
            doc["coords"] = [list(c) for c in self.coords]
        doc["steps"] = [
            {
                "time": t,
                "terms": [
                    {"qubits": list(term.qubits), "coeff": term.coeff, "pauli": term.pauli}
                    for term in h.terms
                ],
            }
            for h, t in zip(self.hams, self.times)
        ]
        return doc

    def digest(self) -> str:
        return hashlib.sha256(serialize_plan(self).encode()).hexdigest()


@dataclass(frozen=True)
class InteractionGraph:
    """Overlap graph over every term of every step (the super-interaction graph).

    Vertex ``v`` is the ``v``-th entry of ``EvolutionPlan.all_terms()``.
    """

    n: int
    K: int
    steps: tuple[int, ...]
    supports: tuple[frozenset[int], ...]
    adjacency: tuple[tuple[int, ...], ...]
    operators: tuple[PauliSum, ...] = field(repr=False, compare=False)

    @property
    def num_vertices(self) -> int:
        return len(self.supports)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nbrs in enumerate(self.adjacency) for v in nbrs if u < v]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    @property
    def locality(self) -> int:
        return max((len(s) for s in self.supports), default=0)

    def touching(self, qubits) -> list[int]:
        qubits = set(qubits)
        return [v for v, s in enumerate(self.supports) if s & qubits]

    def step_vertices(self, k: int) -> list[int]:
        return [v for v, s in enumerate(self.steps) if s == k]

    def connected_with(self, vertices, qubits) -> bool:
        """Whether ``vertices`` plus the qubit set ``qubits`` form one connected blob."""
        vertices = list(dict.fromkeys(vertices))
        if not vertices:
            return False
        qubits = set(qubits)
        seen = {v for v in vertices if self.supports[v] & qubits}
        if not seen:
            return False
        queue = deque(seen)
        pending = set(vertices) - seen
        while queue and pending:
            u = queue.popleft()
            for v in [v for v in pending if self.supports[u] & self.supports[v]]:
                pending.discard(v)
                seen.add(v)
                queue.append(v)
        return not pending


def interaction_graph(plan: EvolutionPlan) -> InteractionGraph:
    entries = plan.all_terms()
    supports = [term.support for _, term in entries]
    by_qubit: dict[int, list[int]] = {}
    for v, s in enumerate(supports):
        for q in s:
            by_qubit.setdefault(q, []).append(v)
    adjacency = []
    for v, s in enumerate(supports):
        nbrs = {u for q in s for u in by_qubit[q] if u != v}
        adjacency.append(tuple(sorted(nbrs)))
    return InteractionGraph(
        n=plan.n,
        K=plan.K,
        steps=tuple(k for k, _ in entries),
        supports=tuple(supports),
        adjacency=tuple(adjacency),
        operators=tuple(term.operator(plan.n) for _, term in entries),
    )


# ---------------------------------------------------------------------------
# document schema


def _require(cond, message, location):
    if not cond:
        raise ParseError(message, location)


def _as_int(value, location, minimum=None):
    _require(isinstance(value, int) and not isinstance(value, bool), "expected an integer", location)
    if minimum is not None:
        _require(value >= minimum, f"must be >= {minimum}", location)
    return value


def _as_float(value, location):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    _require(ok, "expected a number", location)
    value = float(value)
    _require(math.isfinite(value), "must be finite", location)
    return value


def plan_from_dict(doc: Any, max_abs_time: float = MAX_ABS_TIME) -> EvolutionPlan:
    _require(isinstance(doc, dict), "plan document must be an object", "$")
    unknown = set(doc) - SCHEMA_KEYS
    _require(not unknown, f"unknown fields {sorted(unknown)}", "$")
    _require("n" in doc, "missing field", "n")
    n = _as_int(doc["n"], "n", minimum=1)
    _require(n <= 31, "at most 31 qubits", "n")
    dimension = _as_int(doc.get("dimension", 1), "dimension", minimum=1)

    coords = None
    if doc.get("coords") is not None:
        raw = doc["coords"]
        _require(isinstance(raw, list) and len(raw) == n, f"need {n} coordinate tuples", "coords")
        coords = []
        for q, c in enumerate(raw):
            loc = f"coords[{q}]"
            _require(isinstance(c, list) and len(c) == dimension, f"need {dimension} integers", loc)
            coords.append(tuple(_as_int(v, f"{loc}[{j}]") for j, v in enumerate(c)))
        _require(len(set(coords)) == n, "coordinates must be distinct", "coords")
        coords = tuple(coords)

    steps = doc.get("steps")
    _require(isinstance(steps, list) and steps, "need a nonempty list of steps", "steps")
    hams, times = [], []
    for k, step in enumerate(steps):
        sloc = f"steps[{k}]"
        _require(isinstance(step, dict), "step must be an object", sloc)
        extra = set(step) - {"time", "terms"}
        _require(not extra, f"unknown fields {sorted(extra)}", sloc)
        _require("time" in step, "missing field", f"{sloc}.time")
        t = _as_float(step["time"], f"{sloc}.time")
        _require(abs(t) <= max_abs_time, f"|time| exceeds {max_abs_time}", f"{sloc}.time")
        raw_terms = step.get("terms")
        _require(isinstance(raw_terms, list) and raw_terms, "need a nonempty term list", f"{sloc}.terms")
        terms = []
        for j, rt in enumerate(raw_terms):
            tloc = f"{sloc}.terms[{j}]"
            _require(isinstance(rt, dict), "term must be an object", tloc)
            extra = set(rt) - {"qubits", "coeff", "pauli"}
            _require(not extra, f"unknown fields {sorted(extra)}", tloc)
            for key in ("qubits", "coeff", "pauli"):
                _require(key in rt, "missing field", f"{tloc}.{key}")
            qubits = rt["qubits"]
            _require(isinstance(qubits, list) and qubits, "need a nonempty qubit list", f"{tloc}.qubits")
            qubits = tuple(_as_int(q, f"{tloc}.qubits") for q in qubits)
            _require(all(0 <= q < n for q in qubits), f"qubit index out of range [0, {n})", f"{tloc}.qubits")
            _require(len(set(qubits)) == len(qubits), "duplicate qubit", f"{tloc}.qubits")
            coeff = _as_float(rt["coeff"], f"{tloc}.coeff")
            _require(abs(coeff) <= 1.0, "|coeff| must be <= 1", f"{tloc}.coeff")
            word = rt["pauli"]
            _require(isinstance(word, str), "expected a Pauli word", f"{tloc}.pauli")
            _require(len(word) == len(qubits), "word length must match qubit list", f"{tloc}.pauli")
            _require(set(word) <= set("XYZ"), "letters must be X, Y or Z", f"{tloc}.pauli")
            terms.append(Term(qubits, coeff, word))
        hams.append(HamiltonianSpec(n, tuple(terms), dimension, coords))
        times.append(t)
    return EvolutionPlan(tuple(hams), tuple(times))


def parse_spec(text: str | bytes | dict, max_abs_time: float = MAX_ABS_TIME) -> EvolutionPlan:
    """Parse and validate a plan document (JSON text or an already-decoded dict)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", f"line {exc.lineno}") from None
    else:
        doc = text
    return plan_from_dict(doc, max_abs_time)


def serialize_plan(plan: EvolutionPlan) -> str:
    return json.dumps(plan.to_dict(), indent=2) + "\n"


def load_plan(path) -> EvolutionPlan:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# ---------------------------------------------------------------------------
# convenience builders used by tests, examples and the bundled configs


def tfim_chain(n: int, t: float, zz: float = 1.0, x: float = 0.7, K: int = 1) -> EvolutionPlan:
    """Open-boundary transverse-field Ising chain, repeated over ``K`` equal steps."""
    terms = [Term((q, q + 1), zz, "ZZ") for q in range(n - 1)]
    terms += [Term((q,), x, "X") for q in range(n)]
    ham = HamiltonianSpec(n, tuple(terms))
    return EvolutionPlan((ham,) * K, (float(t),) * K)


def tfim_grid(rows: int, cols: int, t: float, zz: float = 1.0, x: float = 0.7) -> EvolutionPlan:
    """2D transverse-field Ising model on a ``rows x cols`` grid, qubit ``r*cols + c``."""
    n = rows * cols
    coords = tuple((r, c) for r in range(rows) for c in range(cols))
    terms = []
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                terms.append(Term((q, q + 1), zz, "ZZ"))
            if r + 1 < rows:
                terms.append(Term((q, q + cols), zz, "ZZ"))
    terms += [Term((q,), x, "X") for q in range(n)]
    return EvolutionPlan((HamiltonianSpec(n, tuple(terms), 2, coords),), (float(t),))


def random_plan(rng: np.random.Generator, n: int, K: int, t: float, locality: int = 2,
                num_terms: int | None = None) -> EvolutionPlan:
    """Random geometrically-local plan: each term is a random Pauli word on a
    window of consecutive qubits with a coefficient drawn from [-1, 1]."""
    hams = []
    for _ in range(K):
        count = num_terms if num_terms is not None else int(rng.integers(1, 2 * n + 1))
        terms = []
        for _ in range(count):
            width = int(rng.integers(1, min(locality, n) + 1))
            start = int(rng.integers(0, n - width + 1))
            word = "".join(rng.choice(list("XYZ"), size=width))
            coeff = float(np.round(rng.uniform(-1, 1), 6))
            terms.append(Term(tuple(range(start, start + width)), coeff, word))
        hams.append(HamiltonianSpec(n, tuple(terms)))
    return EvolutionPlan(tuple(hams), (float(t),) * K)
