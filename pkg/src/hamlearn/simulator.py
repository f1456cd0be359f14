"""Dense brute-force simulator standing in for the unknown device.

It provides exact evolution, exact Heisenberg operators, depolarizing noise and
randomized-measurement sampling.  Matrix exponentials use Hermitian
eigendecomposition so that the oracle never shares code with the learned or
compiled path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import CapacityError
from .hamiltonian import EvolutionPlan, HamiltonianSpec
from .pauli import STAB_VECTORS, PauliTerm, product_state
from .rng import substream

STATE_LIMIT = 10
DENSITY_LIMIT = 6
BLOCK = 4096

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.diag([1, -1j])
# Rotations taking the +1 eigenstate of X, Y, Z to |0>.
BASIS_ROTATIONS = np.stack([_H, _H @ _SDG, np.eye(2, dtype=complex)])


@dataclass(frozen=True)
class NoiseModel:
    """Single-qubit depolarizing noise ``rho -> (1-gamma) rho + gamma I/2`` on every qubit."""

    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


def _limit(n: int, limit: int, what: str):
    if n > limit:
        raise CapacityError(f"{what} on {n} qubits exceeds the limit of {limit}")


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h``."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def step_unitary(ham: HamiltonianSpec, t: float) -> np.ndarray:
    _limit(ham.n, STATE_LIMIT, "dense evolution")
    return expm_hermitian(ham.dense(), t)


def step_unitaries(plan: EvolutionPlan) -> list[np.ndarray]:
    return [step_unitary(h, t) for h, t in zip(plan.hams, plan.times)]


def plan_unitary(plan: EvolutionPlan) -> np.ndarray:
    """``U = U_K ... U_1``."""
    u = np.eye(1 << plan.n, dtype=complex)
    for uk in step_unitaries(plan):
        u = uk @ u
    return u


def evolve(plan: EvolutionPlan, psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (1 << plan.n,):
        raise ValueError(f"state has shape {psi.shape}, plan needs {1 << plan.n} amplitudes")
    for uk in step_unitaries(plan):
        psi = uk @ psi
    return psi


def exact_heisenberg(plan: EvolutionPlan, o: PauliTerm | np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
    """Dense ``U^dag O U``."""
    u = plan_unitary(plan) if u is None else u
    dense = o.to_dense() if isinstance(o, PauliTerm) else np.asarray(o)
    return u.conj().T @ dense @ u


def depolarize(rho: np.ndarray, gamma: float, n: int) -> np.ndarray:
    """Apply the depolarizing channel on each of the ``n`` qubits.

    Works on a single ``(d, d)`` matrix or a batch ``(..., d, d)``.
    """
    if gamma == 0:
        return rho
    batch = rho.shape[:-2]
    t = rho.reshape(batch + (2,) * (2 * n))
    nb = len(batch)
    for q in range(n):
        row = nb + n - 1 - q
        col = row + n
        traced = np.trace(t, axis1=row, axis2=col)
        mixed = np.expand_dims(np.expand_dims(traced, row), col) * np.eye(2).reshape(
            [2 if a in (row, col) else 1 for a in range(t.ndim)]
        ) / 2
        t = (1 - gamma) * t + gamma * mixed
    return t.reshape(rho.shape)


def noisy_evolve(plan: EvolutionPlan, noise: NoiseModel, rho: np.ndarray) -> np.ndarray:
    """Alternate unitary steps and depolarizing layers: ``N o U_K o ... o N o U_1``."""
    _limit(plan.n, DENSITY_LIMIT, "density-matrix evolution")
    rho = np.asarray(rho, dtype=complex)
    for uk in step_unitaries(plan):
        rho = uk @ rho @ uk.conj().T
        rho = depolarize(rho, noise.gamma, plan.n)
    return rho


def noisy_heisenberg(plan: EvolutionPlan, noise: NoiseModel, o: PauliTerm | np.ndarray) -> np.ndarray:
    """Adjoint of :func:`noisy_evolve` applied to ``o`` (depolarizing is self-adjoint)."""
    _limit(plan.n, DENSITY_LIMIT, "density-matrix evolution")
    op = o.to_dense() if isinstance(o, PauliTerm) else np.asarray(o, dtype=complex)
    for uk in reversed(step_unitaries(plan)):
        op = depolarize(op, noise.gamma, plan.n)
        op = uk.conj().T @ op @ uk
    return op


def _apply_local(batch: np.ndarray, mats: np.ndarray, q: int, n: int, axis: int) -> np.ndarray:
    """Apply per-record 2x2 ``mats`` (count, 2, 2) on qubit ``q`` along ``axis`` (1 or 2)."""
    count = batch.shape[0]
    d = 1 << n
    hi, lo = 1 << (n - 1 - q), 1 << q
    if axis == 1:
        t = batch.reshape(count, hi, 2, lo, -1)
        return np.einsum("rab,rxbyz->rxayz", mats, t).reshape(batch.shape)
    t = batch.reshape(count, d, hi, 2, lo)
    return np.einsum("rab,rwxby->rwxay", mats.conj(), t).reshape(batch.shape)


def _product_states(labels: np.ndarray) -> np.ndarray:
    count, n = labels.shape
    psi = np.ones((count, 1), dtype=complex)
    for q in range(n):
        psi = (STAB_VECTORS[labels[:, q]][:, :, None] * psi[:, None, :]).reshape(count, -1)
    return psi


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _outcome_bits(indices: np.ndarray, n: int) -> np.ndarray:
    return ((indices[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def sample_dataset(plan: EvolutionPlan, N: int, seed: int, noise: NoiseModel | None = None,
                   block: int = BLOCK) -> Dataset:
    """Draw ``N`` randomized-measurement records from the (possibly noisy) device.

    Records are produced in blocks of ``block``; block ``b`` draws its input
    labels, bases and sampling uniforms from ``substream(seed, "records", b)``.
    Outcomes are sampled jointly by inverting the cumulative distribution of
    the basis-rotated output state, which has the same law as measuring the
    qubits one after another with collapse.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    n = plan.n
    noisy = noise is not None
    _limit(n, DENSITY_LIMIT if noisy else STATE_LIMIT, "sampling")
    d = 1 << n
    units = step_unitaries(plan)
    u_total = plan_unitary(plan)
    labels = np.empty((N, n), dtype=np.uint8)
    bases = np.empty((N, n), dtype=np.uint8)
    outcomes = np.empty((N, n), dtype=np.uint8)
    chunk = max(1, min(block, (1 << 22) // (d * d))) if noisy else block
    for b, start in enumerate(range(0, N, block)):
        count = min(block, N - start)
        rng = substream(seed, "records", b)
        lab = rng.integers(0, 6, size=(count, n), dtype=np.uint8)
        bas = rng.integers(0, 3, size=(count, n), dtype=np.uint8)
        uni = rng.random(count)
        idx = np.empty(count, dtype=np.int64)
        for c0 in range(0, count, chunk):
            sl = slice(c0, min(count, c0 + chunk))
            psi = _product_states(lab[sl])
            if noisy:
                rho = psi[:, :, None] * psi[:, None, :].conj()
                for uk in units:
                    rho = uk @ rho @ uk.conj().T
                    rho = depolarize(rho, noise.gamma, n)
                for q in range(n):
                    mats = BASIS_ROTATIONS[bas[sl, q]]
                    rho = _apply_local(rho, mats, q, n, 1)
                    rho = _apply_local(rho, mats, q, n, 2)
                probs = np.einsum("rii->ri", rho).real.clip(min=0)
            else:
                phi = psi @ u_total.T
                for q in range(n):
                    phi = _apply_local(phi[:, :, None], BASIS_ROTATIONS[bas[sl, q]], q, n, 1)[:, :, 0]
                probs = np.abs(phi) ** 2
            idx[sl] = _inverse_cdf(probs, uni[sl])
        labels[start:start + count] = lab
        bases[start:start + count] = bas
        outcomes[start:start + count] = _outcome_bits(idx, n)
    gamma = float(noise.gamma) if noisy else 0.0
    return Dataset(n, plan.K, int(seed), gamma, plan.digest(), labels, bases, outcomes)


def density_from_state(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def stabilizer_state(labels) -> np.ndarray:
    return product_state(labels)


def random_pure_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_density(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    d = 1 << n
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)
