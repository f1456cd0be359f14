"""Downstream uses of the learned local operators.

* mean-value prediction on sparse classical states,
* the two-region Monte-Carlo estimator for global product observables on 2D grids,
* least-squares training of a linear surrogate for a conjugated observable,
* benchmarking the learner against a depolarizing device.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cluster import TruncationPlan, truncation_order
from .errors import CapacityError
from .hamiltonian import EvolutionPlan, InteractionGraph
from .learner import (
    LearnConfig,
    LearnedLocalOperator,
    candidate_paulis,
    learn_local_operators,
)
from .pauli import PauliSum, PauliTerm, product_state
from .reconstruct import apply_channel, sew_channel
from .rng import substream
from .simulator import DENSITY_LIMIT, NoiseModel, noisy_evolve, noisy_heisenberg, sample_dataset

JOINT_LIMIT = 12


# ---------------------------------------------------------------------------
# classical states


@dataclass(frozen=True, eq=False)
class ClassicalState:
    """Sparse state ``sum_r amp_r |b_r>``; bit ``q`` of ``b_r`` is qubit ``q``."""

    n: int
    bits: np.ndarray
    amps: np.ndarray

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("a classical state needs at least one configuration")
        if len(np.unique(self.bits)) != len(self.bits):
            raise ValueError("duplicate configurations")
        norm = float(np.sum(np.abs(self.amps) ** 2))
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"amplitudes have squared norm {norm}, expected 1")

    @classmethod
    def from_configs(cls, n: int, configs: Sequence[tuple], normalize: bool = False) -> "ClassicalState":
        bits, amps = [], []
        for b, a in configs:
            if isinstance(b, str):
                b = sum(int(ch) << q for q, ch in enumerate(b))
            bits.append(int(b))
            amps.append(complex(a))
        amps = np.array(amps, dtype=complex)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, np.array(bits, dtype=np.int64), amps)

    @classmethod
    def basis(cls, n: int, bits: int = 0) -> "ClassicalState":
        return cls(n, np.array([bits], dtype=np.int64), np.array([1.0 + 0j]))

    @classmethod
    def from_dense(cls, psi: np.ndarray, tol: float = 1e-14) -> "ClassicalState":
        psi = np.asarray(psi, dtype=complex)
        n = len(psi).bit_length() - 1
        keep = np.nonzero(np.abs(psi) > tol)[0]
        amps = psi[keep] / np.linalg.norm(psi[keep])
        return cls(n, keep.astype(np.int64), amps)

    @property
    def R(self) -> int:
        return len(self.bits)

    def dense(self) -> np.ndarray:
        psi = np.zeros(1 << self.n, dtype=complex)
        psi[self.bits] = self.amps
        return psi

    def reduced(self, qubits: Sequence[int]) -> np.ndarray:
        """Reduced density matrix on ``qubits`` (little-endian in that order)."""
        qubits = list(qubits)
        inner = np.zeros(len(self.bits), dtype=np.int64)
        for k, q in enumerate(qubits):
            inner |= ((self.bits >> q) & 1) << k
        outer_mask = ~sum(1 << q for q in qubits)
        outer = self.bits & outer_mask
        d = 1 << len(qubits)
        rho = np.zeros((d, d), dtype=complex)
        for key in np.unique(outer):
            sel = outer == key
            v = np.zeros(d, dtype=complex)
            v[inner[sel]] = self.amps[sel]
            rho += np.outer(v, v.conj())
        return rho


def random_classical_state(rng: np.random.Generator, n: int, R: int) -> ClassicalState:
    bits = rng.choice(1 << n, size=min(R, 1 << n), replace=False)
    amps = rng.normal(size=len(bits)) + 1j * rng.normal(size=len(bits))
    return ClassicalState(n, np.sort(bits).astype(np.int64), amps[np.argsort(bits)] / np.linalg.norm(amps))


# ---------------------------------------------------------------------------
# mean values


def _local_table(locals_) -> dict[tuple[int, str], LearnedLocalOperator]:
    if isinstance(locals_, Mapping):
        return dict(locals_)
    return {(lo.qubit, lo.letter): lo for lo in locals_}


@dataclass
class MeanValue:
    value: float
    stderr: float

    def __iter__(self):
        yield self.value
        yield self.stderr


def predict_mean_value(locals_, phi: ClassicalState, o: PauliSum) -> MeanValue:
    """Predict ``<phi|U^dag o U|phi>`` from learned locals.

    Each Pauli string of ``o`` is a product of single-qubit Paulis, so its
    conjugate is the product (ascending qubit order) of the matching learned
    locals.  The product is evaluated densely on the joint support against the
    reduced state of ``phi``.  The standard error propagates per-coefficient
    standard errors linearly (delta method), treating coefficients as independent.
    """
    table = _local_table(locals_)
    n = phi.n
    if o.n != n:
        raise ValueError(f"observable on {o.n} qubits, state on {n}")
    factors_per_term = []
    joint: set[int] = set()
    for (x, z), c in o.items():
        term = PauliTerm(n, x, z)
        used = [table[(q, term.letter(q))] for q in term.support]
        for lo in used:
            joint |= set(lo.estimate.support()) | {lo.qubit}
            joint |= {q for key in lo.stderr for q in range(n) if ((key[0] | key[1]) >> q) & 1}
        factors_per_term.append((c, used))
    joint_q = sorted(joint)
    if len(joint_q) > JOINT_LIMIT:
        raise CapacityError(f"joint lightcone of {len(joint_q)} qubits exceeds {JOINT_LIMIT}")
    rho = phi.reduced(joint_q)
    d = rho.shape[0]
    dense_cache: dict[int, np.ndarray] = {}

    def dense_of(lo):
        key = id(lo)
        if key not in dense_cache:
            dense_cache[key] = lo.estimate.restrict(joint_q).to_dense(JOINT_LIMIT) if len(joint_q) \
                else np.eye(1) * complex(lo.estimate.coefficient((0, 0)))
        return dense_cache[key]

    value = 0j
    grads: dict[tuple[int, int, tuple[int, int]], complex] = {}
    stderr_of = {}
    for c, used in factors_per_term:
        mats = [dense_of(lo) for lo in used]
        prod = np.eye(d, dtype=complex)
        for m in mats:
            prod = prod @ m
        value += c * np.trace(prod @ rho)
        for k, lo in enumerate(used):
            if not lo.stderr:
                continue
            left = np.eye(d, dtype=complex)
            for m in mats[:k]:
                left = left @ m
            right = np.eye(d, dtype=complex)
            for m in mats[k + 1:]:
                right = right @ m
            sandwich = right @ rho @ left  # Tr(L Q R rho) = Tr(Q R rho L)
            for key in lo.stderr:
                qd = PauliTerm(n, *key).to_sum().restrict(joint_q).to_dense(JOINT_LIMIT)
                g = c * np.trace(qd @ sandwich)
                gid = (lo.qubit, "XYZ".index(lo.letter), key)
                grads[gid] = grads.get(gid, 0) + g
                stderr_of[gid] = lo.stderr[key]
    var = sum(abs(np.real(g)) ** 2 * stderr_of[k] ** 2 for k, g in grads.items())
    return MeanValue(float(np.real(value)), float(math.sqrt(var)))


def exact_mean_value(plan_unitary_: np.ndarray, phi: ClassicalState, o: PauliSum) -> float:
    psi = plan_unitary_ @ phi.dense()
    return float(np.real(psi.conj() @ o.to_dense() @ psi))


# ---------------------------------------------------------------------------
# 2D Monte-Carlo sewing


@dataclass(frozen=True)
class Region2D:
    """Strip partition of a grid: even strips form region 1, odd strips region 2."""

    assignment: tuple[int, ...]
    subregions: tuple[tuple[tuple[int, ...], ...], tuple[tuple[int, ...], ...]]
    width: int
    min_separation: float

    def members(self, region: int) -> list[int]:
        return [q for q, r in enumerate(self.assignment) if r == region]


def strip_partition(coords: Sequence[Sequence[int]], M: int, axis: int = 0) -> Region2D:
    """Cut the grid into strips of width ``2M`` along ``axis`` and alternate regions."""
    if M < 1:
        raise ValueError("M must be >= 1")
    width = 2 * M
    pos = np.array([c[axis] for c in coords])
    strip = (pos - pos.min()) // width
    assignment = tuple(int(s % 2) + 1 for s in strip)
    subs: tuple[list, list] = ([], [])
    for s in sorted(set(strip.tolist())):
        subs[s % 2].append(tuple(int(q) for q in np.nonzero(strip == s)[0]))
    sep = math.inf
    for region in subs:
        for a in range(len(region)):
            for b in range(a + 1, len(region)):
                dist = min(
                    sum(abs(u - v) for u, v in zip(coords[p], coords[q]))
                    for p in region[a] for q in region[b]
                )
                sep = min(sep, dist)
    part = Region2D(assignment, (tuple(subs[0]), tuple(subs[1])), width, sep)
    if sep < width:
        raise ValueError(f"strip separation {sep} below {width}")
    return part


@dataclass
class MonteCarloEstimate:
    estimate: float
    stderr: float
    gamma1: float
    gamma2: float
    variance: float
    shots: int

    def __iter__(self):
        yield self.estimate
        yield self.stderr


def _dense_local(op, n):
    if isinstance(op, LearnedLocalOperator):
        op = op.estimate
    if isinstance(op, PauliSum):
        return op.to_dense(max_qubits=JOINT_LIMIT)
    op = np.asarray(op, dtype=complex)
    if op.shape != (1 << n, 1 << n):
        raise ValueError(f"dense local has shape {op.shape}")
    return op


def region_operator(ops: Sequence, members: Sequence[int], n: int) -> np.ndarray:
    out = np.eye(1 << n, dtype=complex)
    for q in members:
        out = out @ _dense_local(ops[q], n)
    return out


def mc_amplitudes(ops: Sequence, partition: Region2D, n: int):
    """``a = V(R1)^dag |0>``, ``b = V(R2)|0>`` as dense vectors."""
    v1 = region_operator(ops, partition.members(1), n)
    v2 = region_operator(ops, partition.members(2), n)
    return v1.conj().T[:, 0].copy(), v2[:, 0].copy()


def mc_enumerate(ops: Sequence, partition: Region2D, n: int) -> dict:
    """Exact distribution ``p``, estimator values ``F`` and moments by full enumeration."""
    a, b = mc_amplitudes(ops, partition, n)
    g1 = float(np.sum(np.abs(a) ** 2))
    g2 = float(np.sum(np.abs(b) ** 2))
    if g1 <= 0:
        raise ValueError("region 1 annihilates |0...0>")
    p = np.abs(a) ** 2 / g1
    support = p > 0
    F = np.zeros_like(b)
    F[support] = g1 * b[support] / a[support]
    mean = np.sum(p * F)
    second = np.sum(p * np.abs(F) ** 2)
    return {
        "p": p, "F": F, "mean": complex(mean), "gamma1": g1, "gamma2": g2,
        "variance": float(second - abs(mean) ** 2), "direct": complex(np.vdot(a, b)),
    }


def mc_sew_2d(ops: Sequence, partition: Region2D, shots: int, seed: int, n: int | None = None,
              block: int = 1 << 14) -> MonteCarloEstimate:
    """Importance-sampled estimate of ``<0|V(R1) V(R2)|0>``.

    ``ops[q]`` is the learned conjugate of the observable factor on qubit ``q``
    (a PauliSum, LearnedLocalOperator or dense matrix).  ``x`` is drawn from
    ``p(x) = |<0|V(R1)|x>|^2 / gamma1`` and ``F(x) = gamma1 <x|V(R2)|0> / <x|V(R1)^dag|0>``.
    """
    n = len(ops) if n is None else n
    if shots < 1:
        raise ValueError("shots must be >= 1")
    a, b = mc_amplitudes(ops, partition, n)
    g1 = float(np.sum(np.abs(a) ** 2))
    g2 = float(np.sum(np.abs(b) ** 2))
    if g1 <= 0:
        raise ValueError("region 1 annihilates |0...0>")
    p = np.abs(a) ** 2 / g1
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    samples = []
    for k, start in enumerate(range(0, shots, block)):
        count = min(block, shots - start)
        u = substream(seed, "mc2d", k).random(count)
        x = np.minimum(np.searchsorted(cdf, u, side="right"), len(p) - 1)
        # Zero-probability configurations can only appear through rounding; move to the next live one.
        dead = p[x] == 0
        if np.any(dead):
            live = np.nonzero(p > 0)[0]
            x[dead] = live[np.minimum(np.searchsorted(live, x[dead]), len(live) - 1)]
        samples.append(g1 * b[x] / a[x])
    F = np.concatenate(samples)
    est = complex(F.mean())
    var = float(np.mean(np.abs(F - est) ** 2)) * shots / max(shots - 1, 1)
    return MonteCarloEstimate(float(est.real), math.sqrt(var / shots), g1, g2, var, shots)


# ---------------------------------------------------------------------------
# classifier surrogate


@dataclass(eq=False)
class ClassifierModel:
    basis: list[PauliTerm]
    weights: np.ndarray
    residual: float
    rank: int
    ridge: float = 0.0
    meta: dict = field(default_factory=dict)

    def predict_state(self, state: ClassicalState) -> float:
        return float((feature_matrix([state], self.basis) @ self.weights)[0])

    def predict_density(self, rho: np.ndarray) -> float:
        return float(sum(w * np.real(np.trace(q.to_dense() @ rho)) for q, w in zip(self.basis, self.weights)))

    def operator(self, n: int) -> PauliSum:
        return PauliSum(n, [q.x for q in self.basis], [q.z for q in self.basis], self.weights)

    def to_dict(self) -> dict:
        return {
            "basis": [q.label for q in self.basis],
            "weights": [float(w) for w in self.weights],
            "residual": self.residual,
            "rank": self.rank,
            "ridge": self.ridge,
            "meta": self.meta,
        }


def state_expectation(state: ClassicalState, q: PauliTerm) -> float:
    """``<phi|Q|phi>`` for a sparse state, via ``Q|b> = i^{|xz|} (-1)^{|z & b|} |b ^ x>``."""
    order = np.argsort(state.bits)
    bits = state.bits[order]
    amps = state.amps[order]
    target = bits ^ q.x
    pos = np.searchsorted(bits, target)
    pos = np.minimum(pos, len(bits) - 1)
    hit = bits[pos] == target
    signs = 1 - 2 * (np.bitwise_count((bits & q.z).astype(np.uint64)).astype(np.int64) & 1)
    phase = 1j ** ((q.x & q.z).bit_count() % 4)
    val = phase * np.sum(np.conj(amps[pos[hit]]) * signs[hit] * amps[hit])
    return float(np.real(val))


def feature_matrix(states: Sequence[ClassicalState], basis: Sequence[PauliTerm]) -> np.ndarray:
    return np.array([[state_expectation(s, q) for q in basis] for s in states], dtype=float)


def train_classifier(features: Sequence[ClassicalState], labels, o: PauliTerm,
                     graph: InteractionGraph, trunc: TruncationPlan | int,
                     basis: Sequence[PauliTerm] | None = None) -> ClassifierModel:
    """Least-squares fit of ``y_i ~ sum_j alpha_j <phi_i|Q_j|phi_i>`` over the lightcone basis of ``o``."""
    labels = np.asarray(labels, dtype=float)
    if len(features) != len(labels) or len(labels) < 1:
        raise ValueError("need matching, nonempty features and labels")
    if basis is None:
        (i,) = o.support
        basis = candidate_paulis(graph, i, trunc)
    basis = list(basis)
    phi = feature_matrix(features, basis)
    weights, _, rank, _ = np.linalg.lstsq(phi, labels, rcond=None)
    ridge = 0.0
    if rank < min(phi.shape):
        norm2 = float(np.linalg.norm(phi, 2) ** 2)
        ridge = 1e-8 * norm2
        warnings.warn(f"feature matrix is rank deficient ({rank} < {min(phi.shape)}); "
                      f"using ridge regularization {ridge:.3g}", RuntimeWarning)
        # Ridge on the numerically nonzero spectrum; rounding-level singular values are dropped
        # with the same cutoff lstsq uses, otherwise 1/ridge would amplify them.
        u, sv, vt = np.linalg.svd(phi, full_matrices=False)
        keep = sv > sv[0] * max(phi.shape) * np.finfo(float).eps
        weights = vt[keep].T @ (sv[keep] / (sv[keep] ** 2 + ridge) * (u[:, keep].T @ labels))
    residual = float(np.linalg.norm(phi @ weights - labels))
    return ClassifierModel(basis, weights, residual, int(rank), ridge,
                           {"n_data": len(labels), "basis_size": len(basis)})


# ---------------------------------------------------------------------------
# noise benchmark


@dataclass
class BenchReport:
    gamma: float
    n: int
    reference: float
    observables: list[str]
    gaps: list[float]
    population_gaps: list[float]
    max_gap: float
    max_population_gap: float
    ratio: float
    verdict: str
    stats: dict = field(default_factory=dict)
    learned: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("learned")
        return out


def bench_panel(n: int, seed: int, states: int = 8):
    """Observables (every single-qubit Pauli and neighbouring ZZ) and stabilizer input states."""
    obs = [PauliSum.from_word(n, [q], letter) for q in range(n) for letter in "XYZ"]
    obs += [PauliSum.from_word(n, [q, q + 1], "ZZ") for q in range(n - 1)]
    rng = substream(seed, "bench-states")
    labels = rng.integers(0, 6, size=(states, n))
    return obs, [product_state(row) for row in labels]


def population_locals(plan: EvolutionPlan, noise: NoiseModel, trunc: TruncationPlan | int,
                      restrict: bool = True) -> list[LearnedLocalOperator]:
    """Infinite-sample locals: the noisy adjoint of each ``O_i``, projected on its candidates."""
    out = []
    for i in range(plan.n):
        cands = candidate_paulis(plan.graph, i, trunc) if restrict else None
        for letter in "XYZ":
            o = PauliTerm.single(plan.n, i, letter)
            full = PauliSum.from_dense(noisy_heisenberg(plan, noise, o)).real(tol=1e-9)
            if cands is not None:
                keys = {(c.x, c.z) for c in cands}
                items = [(k, c) for k, c in full.items() if k in keys]
                full = PauliSum.from_terms(plan.n, items)
            out.append(LearnedLocalOperator(i, letter, full, len(cands) if cands else len(full)))
    return out


def _panel_gaps(plan, noise, locals_, obs, states):
    ch = sew_channel(locals_)
    gaps = []
    for o in obs:
        od = o.to_dense()
        worst = 0.0
        for psi in states:
            rho = np.outer(psi, psi.conj())
            truth = np.real(np.trace(od @ noisy_evolve(plan, noise, rho)))
            model = np.real(np.trace(od @ apply_channel(ch, rho)))
            worst = max(worst, abs(truth - model))
        gaps.append(float(worst))
    return gaps


def noise_benchmark(plan: EvolutionPlan, noise: NoiseModel, cfg: LearnConfig, seed: int,
                    N: int | None = None, states: int = 8) -> BenchReport:
    """Learn from a depolarized device and compare the sewn channel with the device itself."""
    if plan.n > DENSITY_LIMIT:
        raise CapacityError(f"noise benchmark limited to {DENSITY_LIMIT} qubits")
    trunc = truncation_order(plan, min(cfg.epsilon, 0.5))
    if cfg.M_override is not None:
        trunc = trunc.with_order(cfg.M_override)
    N = N if N is not None else (cfg.N_override or 100_000)
    data = sample_dataset(plan, N, seed, noise)
    learned = learn_local_operators(data, plan.graph, trunc, threshold=cfg.threshold)
    obs, panel = bench_panel(plan.n, seed, states)
    gaps = _panel_gaps(plan, noise, learned, obs, panel)
    pop = _panel_gaps(plan, noise, population_locals(plan, noise, trunc, restrict=False), obs, panel)
    reference = noise.gamma * plan.n ** 2
    max_gap, max_pop = max(gaps), max(pop)
    ratio = max_pop / reference if reference > 0 else math.nan
    verdict = "within-reference" if max_pop <= max(reference, 1e-12) else "exceeds-reference"
    coeffs = [c for lo in learned for _, c in lo.raw.items()] if learned[0].raw is not None else []
    return BenchReport(
        gamma=noise.gamma, n=plan.n, reference=reference,
        observables=[next(iter(o.labels())) for o in obs],
        gaps=gaps, population_gaps=pop, max_gap=max_gap, max_population_gap=max_pop,
        ratio=ratio, verdict=verdict,
        stats={"N": N, "M": trunc.M, "coefficients": len(coeffs)},
        learned=learned,
    )


def traceless_zero_check(learned: Sequence[LearnedLocalOperator], sigmas: float = 4.0) -> tuple[bool, float]:
    """Whether every raw coefficient lies within ``sigmas`` standard errors of zero."""
    worst = 0.0
    for lo in learned:
        for key, c in lo.raw.items():
            err = lo.stderr_of(key)
            z = abs(float(np.real(c))) / err if err > 0 else (0.0 if abs(c) == 0 else math.inf)
            worst = max(worst, z)
    return worst <= sigmas, worst


__all__ = [
    "ClassicalState",
    "predict_mean_value",
    "Region2D",
    "strip_partition",
    "mc_sew_2d",
    "mc_enumerate",
    "train_classifier",
    "ClassifierModel",
    "noise_benchmark",
    "BenchReport",
]
