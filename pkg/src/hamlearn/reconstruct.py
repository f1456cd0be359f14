"""Sew the learned local operators into a 2n-qubit operator and channel.

With the swap ``S = prod_i S_i`` between register A (qubits 0..n-1) and
register B (qubits n..2n-1), and ``S_i = 1/2 sum_O O_i (x) O_{i+n}``, the
identity ``U (x) U^dag = S prod_i (U^dag S_i U)`` lets us replace each
conjugated swap factor by

    V_i = 1/2 (I (x) I + sum_{O in X,Y,Z} V_{O_i} (x) O_{i+n}),

and ``V = S V_1 V_2 ... V_n`` acts on ``rho`` through
``Tr_B[V (rho (x) I/2^n) V^dag]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import CapacityError
from .hamiltonian import EvolutionPlan
from .learner import LearnedLocalOperator
from .pauli import PauliSum, PauliTerm, is_unitary, phase_min_distance, spectral_norm
from .rng import substream
from .simulator import exact_heisenberg, plan_unitary, random_pure_state

SEW_LIMIT = 10  # total qubits (2n) for dense sewed operators


def swap_dense(n: int) -> np.ndarray:
    """Permutation matrix exchanging register A (low bits) and B (high bits)."""
    d = 1 << n
    idx = np.arange(d * d)
    lo, hi = idx & (d - 1), idx >> n
    perm = (lo << n) | hi
    s = np.zeros((d * d, d * d))
    s[perm, idx] = 1.0
    return s


def swap_factor(n: int, i: int) -> PauliSum:
    """``S_i = 1/2 sum_O O_i O_{i+n}`` on 2n qubits."""
    total = PauliSum.zero(2 * n)
    for letter in "IXYZ":
        word = PauliSum.from_word(2 * n, [i, i + n], letter * 2, 0.5) if letter != "I" else \
            PauliSum.identity(2 * n, 0.5)
        total = total + word
    return total


def embed_dense(mat: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Lift a matrix on ``qubits`` (little-endian in that list) to ``n`` qubits."""
    qubits = list(qubits)
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    big = np.kron(np.eye(1 << (n - k)), mat)
    virt = qubits + rest
    t = big.reshape((2,) * (2 * n))
    perm = []
    for p in range(n):
        q = n - 1 - p
        perm.append(n - 1 - virt.index(q))
    perm += [a + n for a in perm]
    return t.transpose(perm).reshape(1 << n, 1 << n)


@dataclass(frozen=True, eq=False)
class LearnedChannel:
    n: int
    locals: tuple[PauliSum, ...]
    sources: tuple[LearnedLocalOperator, ...] = field(repr=False)

    @cached_property
    def dense(self) -> np.ndarray:
        """``S V_1 ... V_n`` as a dense 2n-qubit matrix."""
        if 2 * self.n > SEW_LIMIT:
            raise CapacityError(f"dense sewed operator on {2 * self.n} qubits exceeds {SEW_LIMIT}")
        v = swap_dense(self.n).astype(complex)
        for vi in self.locals:
            v = v @ vi.to_dense(max_qubits=SEW_LIMIT)
        return v

    def local_dense(self, i: int) -> tuple[np.ndarray, tuple[int, ...]]:
        """``V_i`` restricted to its own support (plus qubit ``n+i``)."""
        vi = self.locals[i]
        qubits = tuple(sorted(set(vi.support()) | {i, i + self.n}))
        return vi.restrict(qubits).to_dense(max_qubits=2 * SEW_LIMIT), qubits


def sew_channel(locals_: Sequence[LearnedLocalOperator]) -> LearnedChannel:
    """Assemble ``V_i`` for each qubit from its X, Y, Z locals."""
    if not locals_:
        raise ValueError("no local operators supplied")
    n = locals_[0].n
    table = {(lo.qubit, lo.letter): lo for lo in locals_}
    missing = [(i, o) for i in range(n) for o in "XYZ" if (i, o) not in table]
    if missing:
        raise ValueError(f"missing local operators for (qubit, observable) pairs {missing}")
    factors = []
    for i in range(n):
        vi = PauliSum.identity(2 * n, 0.5)
        for letter in "XYZ":
            est = table[(i, letter)].estimate.real()
            vi = vi + est.tensor(PauliTerm.single(n, i, letter).to_sum()) * 0.5
        factors.append(vi)
    ordered = tuple(table[(i, o)] for i in range(n) for o in "XYZ")
    return LearnedChannel(n, tuple(factors), ordered)


def partial_trace_b(big: np.ndarray, n: int) -> np.ndarray:
    d = 1 << n
    return np.trace(big.reshape(d, d, d, d), axis1=0, axis2=2)


def apply_channel(ch: LearnedChannel, rho: np.ndarray) -> np.ndarray:
    """``Tr_B[V (rho (x) I/2^n) V^dag]``."""
    d = 1 << ch.n
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise ValueError(f"rho has shape {rho.shape}, expected {(d, d)}")
    v = ch.dense
    big = v @ np.kron(np.eye(d) / d, rho) @ v.conj().T
    return partial_trace_b(big, ch.n)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def sewed_target(plan: EvolutionPlan, u: np.ndarray | None = None) -> np.ndarray:
    """``U`` on register A and ``U^dag`` on register B."""
    u = plan_unitary(plan) if u is None else u
    return np.kron(u.conj().T, u)


@dataclass
class ErrorReport:
    surrogate_diamond: float
    max_trace_distance: float
    per_local_inf_norms: list[float]
    truncation_bound: float
    sample_stderr_budget: float

    def to_dict(self) -> dict:
        return asdict(self)


def per_local_errors(locals_: Sequence[LearnedLocalOperator], plan: EvolutionPlan,
                     u: np.ndarray | None = None) -> list[float]:
    u = plan_unitary(plan) if u is None else u
    return [
        spectral_norm(lo.estimate.to_dense() - exact_heisenberg(plan, lo.observable, u))
        for lo in locals_
    ]


def reconstruction_error(ch: LearnedChannel, plan: EvolutionPlan, trials: int = 20, seed: int = 0,
                         truncation_bound: float = 0.0) -> ErrorReport:
    u = plan_unitary(plan)
    surrogate = phase_min_distance(ch.dense, sewed_target(plan, u))
    worst = 0.0
    for k in range(trials):
        psi = random_pure_state(substream(seed, "trace-states", k), ch.n)
        rho = np.outer(psi, psi.conj())
        worst = max(worst, trace_distance(apply_channel(ch, rho), u @ rho @ u.conj().T))
    local_errs = per_local_errors(ch.sources, plan, u)
    budget = max(
        (math.sqrt(sum(e * e for e in lo.stderr.values())) for lo in ch.sources), default=0.0
    )
    return ErrorReport(surrogate, worst, local_errs, truncation_bound, budget)


# ---------------------------------------------------------------------------
# compilation


@dataclass(frozen=True)
class CompilePlan:
    p: int
    epsilon: float
    local_depths: tuple[int, ...]
    layers: int
    depth: int


@dataclass(frozen=True, eq=False)
class CompiledLocal:
    qubit: int
    qubits: tuple[int, ...]
    unitary: np.ndarray


def compile_local(vi_dense: np.ndarray) -> np.ndarray:
    """``exp(-i pi/2 (A - I))`` for the Hermitian part of ``A``."""
    herm = (vi_dense + vi_dense.conj().T) / 2
    w, vecs = np.linalg.eigh(herm)
    return (vecs * np.exp(-1j * np.pi / 2 * (w - 1))) @ vecs.conj().T


def compile_unitary(ch: LearnedChannel, eps: float = 0.01, p: int = 1) -> tuple[list[CompiledLocal], CompilePlan]:
    compiled = []
    for i in range(ch.n):
        mat, qubits = ch.local_dense(i)
        compiled.append(CompiledLocal(i, qubits, compile_local(mat)))
    return compiled, trotter_depth(ch, eps, p)


def compiled_product(ch: LearnedChannel, compiled: Sequence[CompiledLocal]) -> np.ndarray:
    """Dense ``S W_1 ... W_n`` on 2n qubits."""
    total = 2 * ch.n
    if total > SEW_LIMIT:
        raise CapacityError(f"dense compiled product on {total} qubits exceeds {SEW_LIMIT}")
    w = swap_dense(ch.n).astype(complex)
    for c in compiled:
        w = w @ embed_dense(c.unitary, c.qubits, total)
    return w


def local_trotter_depth(L: int, eps: float, p: int) -> int:
    """``ceil(pi/2 * ((3L)^p 2^p)^{1/p} / eps^{1/p})``."""
    if p not in (1, 2, 4):
        raise ValueError("Trotter order must be 1, 2 or 4")
    if eps <= 0:
        raise ValueError("eps must be positive")
    factor = ((3 * L) ** p * 2 ** p) ** (1 / p)
    return max(1, math.ceil(math.pi / 2 * factor / eps ** (1 / p) - 1e-12))


def parallel_layers(supports: Sequence[frozenset[int]]) -> int:
    """Greedy colouring of the overlap graph: locals of one colour act on disjoint qubits."""
    colours: list[int] = []
    for k, s in enumerate(supports):
        taken = {colours[j] for j in range(k) if supports[j] & s}
        c = 0
        while c in taken:
            c += 1
        colours.append(c)
    return max(colours, default=-1) + 1


def trotter_depth(ch: LearnedChannel, eps: float, p: int = 1) -> CompilePlan:
    """Reported gate depth: slowest local times the number of parallel layers."""
    depths = []
    supports = []
    for vi in ch.locals:
        L = sum(1 for (x, z), _ in vi.items() if x or z)
        depths.append(local_trotter_depth(max(L, 1), eps, p))
        supports.append(frozenset(vi.support()))
    layers = parallel_layers(supports)
    return CompilePlan(p, eps, tuple(depths), layers, layers * max(depths))


def exact_swap_locals(plan: EvolutionPlan, u: np.ndarray | None = None) -> list[np.ndarray]:
    """Dense ``(U^dag (x) I) S_i (U (x) I)`` for each qubit, used as compilation oracle."""
    u = plan_unitary(plan) if u is None else u
    d = 1 << plan.n
    ua = np.kron(np.eye(d), u)
    return [ua.conj().T @ swap_factor(plan.n, i).to_dense(SEW_LIMIT) @ ua for i in range(plan.n)]


__all__ = [
    "LearnedChannel",
    "sew_channel",
    "apply_channel",
    "reconstruction_error",
    "ErrorReport",
    "compile_unitary",
    "compiled_product",
    "trotter_depth",
    "local_trotter_depth",
    "is_unitary",
]
