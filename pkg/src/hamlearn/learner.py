"""Shadow-style estimation of the Heisenberg-evolved single-qubit Paulis.

For every qubit ``i`` and ``O`` in {X, Y, Z} the learner estimates the Pauli
coefficients of ``U^dag O_i U`` on a candidate set confined to the cluster
lightcone of ``i``:

    alpha_Q = 3^{|Q|}/N * sum_l u_l(O_i) <psi_l|Q|psi_l>,
    u_l(O_i) = 3 <phi_{l,i}|O|phi_{l,i}>.
"""

from __future__ import annotations

import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import TruncationPlan, connected_vertex_sets, term_count_bound
from .dataset import BASIS_LETTERS, Dataset, MeasurementRecord
from .errors import CapacityError, ParseError
from .hamiltonian import EvolutionPlan, InteractionGraph
from .pauli import PauliSum, PauliTerm, _pc
from .simulator import exact_heisenberg, plan_unitary

MODEL_FORMAT = "hamlearn-model"
MODEL_VERSION = 1
DEFAULT_CANDIDATE_CAP = 1 << 14
THRESHOLD_SIGMA = 2.0
_RECORD_CHUNK = 1 << 15

# Per stabilizer label code: (x bit, z bit, negative sign) of its axis.
_LABEL_AXIS = np.array(
    [[0, 1, 0], [0, 1, 1], [1, 0, 0], [1, 0, 1], [1, 1, 0], [1, 1, 1]], dtype=np.uint64
)


@dataclass(frozen=True)
class LearnConfig:
    epsilon: float = 0.1
    delta: float = 0.05
    N_override: int | None = None
    M_override: int | None = None
    threshold: bool = True
    exponent_c: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True, eq=False)
class LearnedLocalOperator:
    """Estimate of ``U^dag O_i U`` restricted to its candidate Pauli set."""

    qubit: int
    letter: str
    estimate: PauliSum
    candidate_count: int
    stderr: dict = field(default_factory=dict)
    raw: PauliSum | None = None

    @property
    def n(self) -> int:
        return self.estimate.n

    @property
    def L(self) -> int:
        return self.candidate_count

    @property
    def observable(self) -> PauliTerm:
        return PauliTerm.single(self.n, self.qubit, self.letter)

    def stderr_of(self, key) -> float:
        return float(self.stderr.get(key, 0.0))


def estimate_u(record: MeasurementRecord, o: PauliTerm) -> float:
    """``3 <phi_i|O|phi_i>`` for the single-qubit Pauli ``o`` acting on qubit ``i``."""
    (i,) = o.support
    letter = o.letter(i)
    if record.bases[i] != BASIS_LETTERS.index(letter):
        return 0.0
    return 3.0 if record.outcomes[i] == 0 else -3.0


def lightcone_regions(graph: InteractionGraph, i: int, M: int) -> list[frozenset[int]]:
    """Maximal qubit regions ``{i} | supp(cluster)`` over connected clusters of size <= M."""
    regions = {frozenset([i])}
    for verts in connected_vertex_sets(graph, {i}, M):
        regions.add(frozenset([i]).union(*(graph.supports[v] for v in verts)))
    ordered = sorted(regions, key=lambda r: (-len(r), sorted(r)))
    maximal: list[frozenset[int]] = []
    for r in ordered:
        if not any(r <= m for m in maximal):
            maximal.append(r)
    return sorted(maximal, key=sorted)


def _region_paulis(region: Sequence[int], max_weight: int) -> set[tuple[int, int]]:
    region = sorted(region)
    out = set()
    r = len(region)
    for code in range(1, 4 ** r):
        x = z = 0
        w = 0
        for k, q in enumerate(region):
            letter = (code >> (2 * k)) & 3
            if letter:
                w += 1
                x |= (letter & 1) << q
                z |= (letter >> 1) << q
        if w <= max_weight:
            out.add((x, z))
    return out


def candidate_paulis(graph: InteractionGraph, i: int, trunc: TruncationPlan | int,
                     cap: int = DEFAULT_CANDIDATE_CAP) -> list[PauliTerm]:
    """Non-identity Pauli strings supported inside some lightcone region of ``i``."""
    M = trunc if isinstance(trunc, int) else trunc.M
    max_weight = graph.K * max(graph.locality, 1) * M + 1
    regions = lightcone_regions(graph, i, M)
    predicted = sum(4 ** len(r) - 1 for r in regions)
    limit = min(cap, term_count_bound(M, graph.K, max(graph.locality, 1), graph.max_degree))
    limit = max(limit, 3)
    if predicted > 4 * limit:
        raise CapacityError(f"lightcone of qubit {i} spans {predicted} Pauli strings (cap {limit})")
    keys: set[tuple[int, int]] = set()
    for r in regions:
        keys |= _region_paulis(r, max_weight)
    if len(keys) > limit:
        raise CapacityError(f"{len(keys)} candidates for qubit {i} exceed cap {limit}")
    return [PauliTerm(graph.n, x, z) for x, z in sorted(keys)]


def _record_masks(labels: np.ndarray):
    axis = _LABEL_AXIS[labels]
    shifts = np.arange(labels.shape[1], dtype=np.uint64)
    lx = np.bitwise_or.reduce(axis[:, :, 0] << shifts, axis=1)
    lz = np.bitwise_or.reduce(axis[:, :, 1] << shifts, axis=1)
    neg = np.bitwise_or.reduce(axis[:, :, 2] << shifts, axis=1)
    return lx, lz, neg


def input_expectations(labels: np.ndarray, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Matrix ``E[l, j] = <psi_l|Q_j|psi_l>`` with entries in {0, +1, -1}."""
    lx, lz, neg = _record_masks(labels)
    supp = (xs | zs)[None, :]
    match = (((xs[None, :] ^ lx[:, None]) | (zs[None, :] ^ lz[:, None])) & supp) == 0
    signs = 1 - 2 * (_pc(supp & neg[:, None]) & 1)
    return np.where(match, signs, 0).astype(np.float64)


def _shadow_sums(data: Dataset, i: int, xs: np.ndarray, zs: np.ndarray):
    """Per-letter sums and squared sums of ``u_l * <psi_l|Q|psi_l>``."""
    L = len(xs)
    sums = np.zeros((3, L))
    sq = np.zeros((3, L))
    for start in range(0, data.N, _RECORD_CHUNK):
        sl = slice(start, start + _RECORD_CHUNK)
        ev = input_expectations(data.labels[sl], xs, zs)
        bases = data.bases[sl, i]
        signs = 3.0 * (1 - 2 * data.outcomes[sl, i].astype(np.float64))
        for k in range(3):
            hit = bases == k
            prod = signs[hit, None] * ev[hit]
            sums[k] += prod.sum(axis=0)
            sq[k] += (prod * prod).sum(axis=0)
    return sums, sq


def _finish(sums, sq, weights, N):
    scale = 3.0 ** weights
    mean = sums / N
    var = np.maximum(sq / N - mean * mean, 0.0) * (N / max(N - 1, 1))
    return scale * mean, scale * np.sqrt(var / N)


def estimate_coefficient(data: Dataset, q: PauliTerm, o: PauliTerm) -> tuple[float, float]:
    """Shadow estimate of the ``q``-coefficient of ``U^dag o U`` and its standard error."""
    if data.N < 1:
        raise ValueError("empty dataset")
    (i,) = o.support
    xs = np.array([q.x], dtype=np.uint64)
    zs = np.array([q.z], dtype=np.uint64)
    sums, sq = _shadow_sums(data, i, xs, zs)
    k = BASIS_LETTERS.index(o.letter(i))
    alpha, err = _finish(sums[k], sq[k], np.array([q.weight]), data.N)
    return float(alpha[0]), float(err[0])


def _threshold(coeffs, errs, sigma):
    return np.where(np.abs(coeffs) < sigma * errs, 0.0, coeffs)


def learn_local_operators(data: Dataset, graph: InteractionGraph, trunc: TruncationPlan | int,
                          threshold: bool = True, sigma: float = THRESHOLD_SIGMA,
                          cap: int = DEFAULT_CANDIDATE_CAP) -> list[LearnedLocalOperator]:
    """Estimate all ``3n`` local operators, ordered by qubit then X, Y, Z."""
    if data.n != graph.n:
        raise ValueError(f"dataset has {data.n} qubits, graph has {graph.n}")
    out = []
    for i in range(data.n):
        cands = candidate_paulis(graph, i, trunc, cap)
        xs = np.array([c.x for c in cands], dtype=np.uint64)
        zs = np.array([c.z for c in cands], dtype=np.uint64)
        weights = _pc(xs | zs)
        sums, sq = _shadow_sums(data, i, xs, zs)
        for k, letter in enumerate("XYZ"):
            coeffs, errs = _finish(sums[k], sq[k], weights, data.N)
            raw = PauliSum(data.n, xs, zs, coeffs, prune=0.0)
            kept = _threshold(coeffs, errs, sigma) if threshold else coeffs
            est = PauliSum(data.n, xs, zs, kept)
            stderr = {(int(x), int(z)): float(e) for x, z, e in zip(xs, zs, errs)}
            out.append(LearnedLocalOperator(i, letter, est, len(cands), stderr, raw))
    return out


def sample_size_raw(cfg: LearnConfig, n: int, K: int, locality: int, degree: int, M: int) -> float:
    base = 4.0 ** (K * locality) * 3.0 * (math.e * degree if degree > 0 else 1.0)
    log_val = (2 * math.log(n) + cfg.exponent_c * M * math.log(base)
               + math.log(math.log(1 / cfg.delta)) - 2 * math.log(cfg.epsilon))
    if log_val >= math.log(sys.maxsize):
        return math.inf
    return n * n * base ** (cfg.exponent_c * M) * math.log(1 / cfg.delta) / cfg.epsilon ** 2


def sample_size(cfg: LearnConfig, n: int, K: int, locality: int, degree: int, M: int) -> int:
    """``ceil(n^2 (4^{K L} 3 e d)^{c M} log(1/delta) / eps^2)``, saturating on overflow."""
    if cfg.N_override is not None:
        return int(cfg.N_override)
    raw = sample_size_raw(cfg, n, K, locality, degree, M)
    if not math.isfinite(raw) or raw >= sys.maxsize:
        warnings.warn("sample size overflowed; returning the saturated maximum", RuntimeWarning)
        return sys.maxsize
    return math.ceil(raw)


# ---------------------------------------------------------------------------
# oracle locals


def exact_locals(plan: EvolutionPlan) -> list[LearnedLocalOperator]:
    """Locals taken from the dense simulator: the full Pauli expansion of ``U^dag O_i U``."""
    u = plan_unitary(plan)
    out = []
    for i in range(plan.n):
        for letter in "XYZ":
            o = PauliTerm.single(plan.n, i, letter)
            est = PauliSum.from_dense(exact_heisenberg(plan, o, u)).real(tol=1e-9)
            out.append(LearnedLocalOperator(i, letter, est, len(est)))
    return out


def truncated_locals(plan: EvolutionPlan, trunc: TruncationPlan | int) -> list[LearnedLocalOperator]:
    """Locals from the truncated cluster expansion (noise-free, order ``M``)."""
    from .cluster import truncated_heisenberg

    out = []
    for i in range(plan.n):
        for letter in "XYZ":
            est = truncated_heisenberg(plan, PauliTerm.single(plan.n, i, letter), trunc)
            out.append(LearnedLocalOperator(i, letter, est, len(est)))
    return out


def true_coefficient(heis_dense: np.ndarray, q: PauliTerm) -> float:
    """Normalized-trace projection ``Tr(q A)/2^n`` used as ground truth in tests."""
    d = heis_dense.shape[0]
    return float(np.real(np.trace(q.to_dense() @ heis_dense)) / d)


# ---------------------------------------------------------------------------
# model documents


def _term_doc(n, x, z, coeff, err):
    qubits = [q for q in range(n) if ((x | z) >> q) & 1]
    word = "".join(PauliTerm(n, x, z).letter(q) for q in qubits)
    return {"qubits": qubits, "pauli": word, "coeff": coeff, "stderr": err}


def model_to_dict(locals_: Sequence[LearnedLocalOperator], meta: dict | None = None) -> dict:
    n = locals_[0].n if locals_ else 0
    entries = []
    for lo in locals_:
        # Thresholded candidates are kept with coefficient 0 so their stderr survives.
        coeffs = {key: float(np.real(c)) for key, c in lo.estimate.items()}
        keys = sorted(set(coeffs) | set(lo.stderr), key=lambda k: (k[0] << n) | k[1])
        terms = [_term_doc(n, x, z, coeffs.get((x, z), 0.0), lo.stderr_of((x, z))) for x, z in keys]
        entries.append({
            "qubit": lo.qubit,
            "observable": lo.letter,
            "candidate_count": lo.candidate_count,
            "terms": terms,
        })
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "n": n, "meta": meta or {},
            "locals": entries}


def model_from_dict(doc: dict) -> tuple[list[LearnedLocalOperator], dict]:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a learned-model document", "format")
    if doc.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported version {doc.get('version')}", "version")
    n = doc["n"]
    out = []
    for k, entry in enumerate(doc["locals"]):
        xs, zs, cs, errs = [], [], [], {}
        for j, t in enumerate(entry["terms"]):
            loc = f"locals[{k}].terms[{j}]"
            if len(t["qubits"]) != len(t["pauli"]):
                raise ParseError("word length must match qubit list", loc)
            word = PauliSum.from_word(n, t["qubits"], t["pauli"])
            x, z = int(word.xs[0]), int(word.zs[0])
            xs.append(x)
            zs.append(z)
            cs.append(float(t["coeff"]))
            errs[(x, z)] = float(t["stderr"])
        est = PauliSum(n, xs, zs, cs)
        out.append(LearnedLocalOperator(int(entry["qubit"]), entry["observable"], est,
                                        int(entry["candidate_count"]), errs))
    return out, doc.get("meta", {})


def save_model(path, locals_: Sequence[LearnedLocalOperator], meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(locals_, meta), indent=1, sort_keys=True) + "\n")


def load_model(path) -> tuple[list[LearnedLocalOperator], dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", str(path)) from None
    return model_from_dict(doc)


__all__ = [
    "LearnConfig",
    "LearnedLocalOperator",
    "estimate_u",
    "candidate_paulis",
    "estimate_coefficient",
    "learn_local_operators",
    "sample_size",
    "exact_locals",
    "truncated_locals",
    "save_model",
    "load_model",
]
