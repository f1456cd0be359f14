"""Sparse Pauli-string algebra in the symplectic bitmask representation.

A Hermitian Pauli string on ``n`` qubits is identified by two bitmasks
``(x, z)``: bit ``q`` of ``x`` (``z``) is set when qubit ``q`` carries an X (Z)
component, and both bits set means Y.  The Hermitian operator is

    P(x, z) = i^{|x & z|} X^x Z^z

so that tensor products over disjoint supports simply OR the masks.

Dense matrices use little-endian qubit order: qubit ``q`` is bit ``q`` of the
basis-state index, i.e. ``dense = kron(P_{n-1}, ..., P_1, P_0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import hadamard

from .errors import CapacityError, DimensionError

PRUNE = 1e-12
DENSE_LIMIT = 10
MAX_QUBITS = 31

_IPOW = np.array([1, 1j, -1, -1j], dtype=complex)
_LETTERS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_TO_LETTER = {v: k for k, v in _LETTERS.items()}

# Single-qubit stabilizer states, indexed by integer label.
STAB_LABELS = ("Z+", "Z-", "X+", "X-", "Y+", "Y-")
_SQ2 = 1 / math.sqrt(2)
STAB_VECTORS = np.array(
    [
        [1, 0],
        [0, 1],
        [_SQ2, _SQ2],
        [_SQ2, -_SQ2],
        [_SQ2, 1j * _SQ2],
        [_SQ2, -1j * _SQ2],
    ],
    dtype=complex,
)


def _pc(a):
    return np.bitwise_count(a).astype(np.int64)


def _check_n(n):
    if not 0 <= n <= MAX_QUBITS:
        raise CapacityError(f"at most {MAX_QUBITS} qubits supported, got {n}")


def label_index(label) -> int:
    """Map a stabilizer label ("Z+", "X-", ... or 0..5) to its integer code."""
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < 6:
            raise ValueError(f"stabilizer label out of range: {label}")
        return int(label)
    try:
        return STAB_LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown stabilizer label {label!r}") from None


@dataclass(frozen=True)
class PauliTerm:
    """A single Pauli string with a quarter phase ``i**phase``."""

    n: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self):
        _check_n(self.n)
        full = (1 << self.n) - 1
        if self.x & ~full or self.z & ~full:
            raise DimensionError(f"mask has bits beyond {self.n} qubits")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_label(cls, label: str, phase: int = 0) -> "PauliTerm":
        """Build from a word such as ``"XZI"``; character ``k`` acts on qubit ``k``."""
        x = z = 0
        for q, ch in enumerate(label.upper()):
            if ch not in _LETTERS:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}")
            bx, bz = _LETTERS[ch]
            x |= bx << q
            z |= bz << q
        return cls(len(label), x, z, phase)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliTerm":
        bx, bz = _LETTERS[letter.upper()]
        return cls(n, bx << qubit, bz << qubit)

    @property
    def label(self) -> str:
        return "".join(
            _BITS_TO_LETTER[((self.x >> q) & 1, (self.z >> q) & 1)] for q in range(self.n)
        )

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x | self.z
        return tuple(q for q in range(self.n) if (m >> q) & 1)

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    @property
    def coefficient(self) -> complex:
        return complex(_IPOW[self.phase])

    def letter(self, qubit: int) -> str:
        return _BITS_TO_LETTER[((self.x >> qubit) & 1, (self.z >> qubit) & 1)]

    def __mul__(self, other):
        if isinstance(other, PauliTerm):
            return mul(self, other)
        return NotImplemented

    def to_sum(self) -> "PauliSum":
        return PauliSum(self.n, [self.x], [self.z], [self.coefficient])

    def to_dense(self, max_qubits: int = DENSE_LIMIT) -> np.ndarray:
        return self.to_sum().to_dense(max_qubits)

    def __repr__(self):
        prefix = ("", "i*", "-", "-i*")[self.phase]
        return f"PauliTerm({prefix}{self.label})"


def mul(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Product ``a @ b`` as a single phased Pauli string."""
    if a.n != b.n:
        raise DimensionError(f"qubit count mismatch: {a.n} vs {b.n}")
    x3, z3 = a.x ^ b.x, a.z ^ b.z
    e = (
        a.phase
        + b.phase
        + (a.x & a.z).bit_count()
        + (b.x & b.z).bit_count()
        + 2 * (a.z & b.x).bit_count()
        - (x3 & z3).bit_count()
    )
    return PauliTerm(a.n, x3, z3, e % 4)


def commutes(a: PauliTerm, b: PauliTerm) -> bool:
    return ((a.x & b.z).bit_count() + (a.z & b.x).bit_count()) % 2 == 0


class PauliSum:
    """Complex linear combination of Hermitian Pauli strings.

    Terms are stored as parallel arrays sorted by ``(x, z)``; duplicate strings
    are merged and coefficients below ``prune`` in magnitude are dropped.
    Instances are treated as immutable.
    """

    __slots__ = ("n", "xs", "zs", "coeffs")

    def __init__(self, n: int, xs=(), zs=(), coeffs=(), prune: float = PRUNE):
        _check_n(n)
        xs = np.asarray(xs, dtype=np.uint64).ravel()
        zs = np.asarray(zs, dtype=np.uint64).ravel()
        coeffs = np.asarray(coeffs, dtype=complex).ravel()
        if not (len(xs) == len(zs) == len(coeffs)):
            raise DimensionError("xs, zs and coeffs must have equal length")
        full = np.uint64((1 << n) - 1)
        if len(xs) and (np.any(xs & ~full) or np.any(zs & ~full)):
            raise DimensionError(f"mask has bits beyond {n} qubits")
        if len(xs):
            keys = (xs << np.uint64(n)) | zs
            uniq, inv = np.unique(keys, return_inverse=True)
            if len(uniq) != len(keys):
                summed = np.zeros(len(uniq), dtype=complex)
                np.add.at(summed, inv, coeffs)
                coeffs = summed
                xs = uniq >> np.uint64(n)
                zs = uniq & full
            else:
                order = np.argsort(keys, kind="stable")
                xs, zs, coeffs = xs[order], zs[order], coeffs[order]
            keep = np.abs(coeffs) >= prune
            xs, zs, coeffs = xs[keep], zs[keep], coeffs[keep]
        self.n = n
        self.xs = xs
        self.zs = zs
        self.coeffs = coeffs

    # construction -----------------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls(n)

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n, [0], [0], [coeff])

    @classmethod
    def from_label(cls, label: str, coeff: complex = 1.0) -> "PauliSum":
        t = PauliTerm.from_label(label)
        return cls(t.n, [t.x], [t.z], [coeff])

    @classmethod
    def from_word(cls, n: int, qubits: Sequence[int], word: str, coeff: complex = 1.0) -> "PauliSum":
        """Pauli word placed on ``qubits`` (``word[k]`` acts on ``qubits[k]``)."""
        if len(word) != len(qubits):
            raise DimensionError(f"word {word!r} does not align with qubits {list(qubits)}")
        x = z = 0
        for q, ch in zip(qubits, word.upper()):
            if not 0 <= q < n:
                raise DimensionError(f"qubit {q} out of range for n={n}")
            bx, bz = _LETTERS[ch]
            x |= bx << q
            z |= bz << q
        return cls(n, [x], [z], [coeff])

    @classmethod
    def from_terms(cls, n: int, terms: Mapping | Iterable) -> "PauliSum":
        """From ``{(x, z): coeff}``, ``{label: coeff}`` or an iterable of such pairs."""
        items = terms.items() if isinstance(terms, Mapping) else terms
        xs, zs, cs = [], [], []
        for key, c in items:
            if isinstance(key, str):
                t = PauliTerm.from_label(key)
                if t.n != n:
                    raise DimensionError(f"label {key!r} is not on {n} qubits")
                key = (t.x, t.z)
            elif isinstance(key, PauliTerm):
                c = c * key.coefficient
                key = (key.x, key.z)
            xs.append(key[0])
            zs.append(key[1])
            cs.append(c)
        return cls(n, xs, zs, cs)

    @classmethod
    def from_dense(cls, matrix: np.ndarray, prune: float = PRUNE) -> "PauliSum":
        """Pauli decomposition ``A = sum_P Tr(P A)/2^n P`` of a dense matrix."""
        matrix = np.asarray(matrix, dtype=complex)
        d = matrix.shape[0]
        n = d.bit_length() - 1
        if matrix.shape != (d, d) or d != 1 << n:
            raise DimensionError(f"expected a square 2^n matrix, got {matrix.shape}")
        if n > DENSE_LIMIT:
            raise CapacityError(f"dense decomposition limited to {DENSE_LIMIT} qubits")
        w = np.arange(d, dtype=np.uint64)
        # shifted[x, v] = A[v, v ^ x]; a Walsh-Hadamard transform over v gives the z index.
        shifted = matrix[w[None, :], w[None, :] ^ w[:, None]]
        traces = shifted @ hadamard(d)
        xx, zz = np.meshgrid(w, w, indexing="ij")
        coeffs = traces * _IPOW[_pc(xx & zz) % 4] / d
        return cls(n, xx.ravel(), zz.ravel(), coeffs.ravel(), prune=prune)

    # inspection -------------------------------------------------------------

    def __len__(self):
        return len(self.coeffs)

    def items(self):
        """Yield ``((x, z), coeff)`` pairs in canonical order."""
        for x, z, c in zip(self.xs.tolist(), self.zs.tolist(), self.coeffs.tolist()):
            yield (x, z), c

    @property
    def terms(self) -> dict:
        return dict(self.items())

    def labels(self) -> dict[str, complex]:
        return {PauliTerm(self.n, x, z).label: c for (x, z), c in self.items()}

    def coefficient(self, key) -> complex:
        if isinstance(key, str):
            key = PauliTerm.from_label(key)
        if isinstance(key, PauliTerm):
            x, z, scale = key.x, key.z, key.coefficient
        else:
            (x, z), scale = key, 1.0
        hit = np.nonzero((self.xs == np.uint64(x)) & (self.zs == np.uint64(z)))[0]
        return complex(self.coeffs[hit[0]] / scale) if len(hit) else 0j

    def support(self) -> tuple[int, ...]:
        m = int(np.bitwise_or.reduce(self.xs | self.zs)) if len(self) else 0
        return tuple(q for q in range(self.n) if (m >> q) & 1)

    def weights(self) -> np.ndarray:
        return _pc(self.xs | self.zs)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.coeffs.imag) <= tol))

    def real(self, tol: float | None = None) -> "PauliSum":
        """Drop imaginary parts; with ``tol`` set, raise if any exceeds it."""
        if tol is not None and not self.is_hermitian(tol):
            worst = float(np.max(np.abs(self.coeffs.imag)))
            raise ValueError(f"PauliSum is not Hermitian (max imaginary part {worst:.3g})")
        return PauliSum(self.n, self.xs, self.zs, self.coeffs.real)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def allclose(self, other: "PauliSum", atol: float = 1e-10) -> bool:
        return (self - other).l1_norm() <= atol if len(self - other) else True

    def __repr__(self):
        body = " + ".join(f"({c:.4g})*{lbl}" for lbl, c in list(self.labels().items())[:6])
        more = "" if len(self) <= 6 else f" + ... ({len(self)} terms)"
        return f"PauliSum(n={self.n}, {body or '0'}{more})"

    # arithmetic -------------------------------------------------------------

    def _same_n(self, other: "PauliSum"):
        if self.n != other.n:
            raise DimensionError(f"qubit count mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        self._same_n(other)
        return PauliSum(
            self.n,
            np.concatenate([self.xs, other.xs]),
            np.concatenate([self.zs, other.zs]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    def __neg__(self):
        return PauliSum(self.n, self.xs, self.zs, -self.coeffs)

    def __sub__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, PauliSum):
            return self @ scalar
        return PauliSum(self.n, self.xs, self.zs, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if not isinstance(other, PauliSum):
            return NotImplemented
        self._same_n(other)
        return _product(self, other, commutator=False)

    def adjoint(self) -> "PauliSum":
        return PauliSum(self.n, self.xs, self.zs, self.coeffs.conj())

    def tensor(self, other: "PauliSum") -> "PauliSum":
        """``self`` on qubits ``0..n-1`` and ``other`` on the next ``other.n`` qubits."""
        n = self.n + other.n
        xs = self.xs[:, None] | (other.xs[None, :] << np.uint64(self.n))
        zs = self.zs[:, None] | (other.zs[None, :] << np.uint64(self.n))
        cs = self.coeffs[:, None] * other.coeffs[None, :]
        return PauliSum(n, xs, zs, cs)

    def embed(self, n: int, qubits: Sequence[int] | None = None) -> "PauliSum":
        """Place this operator on ``qubits`` of an ``n``-qubit register.

        Default ``qubits`` is ``0..self.n-1``.
        """
        qubits = list(range(self.n)) if qubits is None else list(qubits)
        if len(qubits) != self.n or max(qubits, default=-1) >= n:
            raise DimensionError(f"cannot embed {self.n} qubits at {qubits} in n={n}")
        xs = np.zeros(len(self), dtype=np.uint64)
        zs = np.zeros(len(self), dtype=np.uint64)
        for src, dst in enumerate(qubits):
            bx = (self.xs >> np.uint64(src)) & np.uint64(1)
            bz = (self.zs >> np.uint64(src)) & np.uint64(1)
            xs |= bx << np.uint64(dst)
            zs |= bz << np.uint64(dst)
        return PauliSum(n, xs, zs, self.coeffs)

    def restrict(self, qubits: Sequence[int]) -> "PauliSum":
        """Compress onto ``qubits`` (inverse of :meth:`embed`); support must fit."""
        qubits = list(qubits)
        outside = set(self.support()) - set(qubits)
        if outside:
            raise DimensionError(f"operator acts on {sorted(outside)} outside {qubits}")
        xs = np.zeros(len(self), dtype=np.uint64)
        zs = np.zeros(len(self), dtype=np.uint64)
        for dst, src in enumerate(qubits):
            xs |= ((self.xs >> np.uint64(src)) & np.uint64(1)) << np.uint64(dst)
            zs |= ((self.zs >> np.uint64(src)) & np.uint64(1)) << np.uint64(dst)
        return PauliSum(len(qubits), xs, zs, self.coeffs)

    # dense bridge -----------------------------------------------------------

    def to_dense(self, max_qubits: int = DENSE_LIMIT) -> np.ndarray:
        if self.n > max_qubits:
            raise CapacityError(f"dense conversion of {self.n} qubits exceeds limit {max_qubits}")
        d = 1 << self.n
        out = np.zeros((d, d), dtype=complex)
        w = np.arange(d, dtype=np.uint64)
        for x, z, c in zip(self.xs, self.zs, self.coeffs):
            vals = c * _IPOW[_pc(x & z) % 4] * (1 - 2 * (_pc(z & w) & 1))
            out[w ^ x, w] += vals
        return out


def _product(a: PauliSum, b: PauliSum, commutator: bool, chunk: int = 1 << 20) -> PauliSum:
    if not len(a) or not len(b):
        return PauliSum.zero(a.n)
    xs_out, zs_out, cs_out = [], [], []
    rows = max(1, chunk // len(b))
    bx, bz, bc = b.xs[None, :], b.zs[None, :], b.coeffs[None, :]
    for start in range(0, len(a), rows):
        ax = a.xs[start : start + rows, None]
        az = a.zs[start : start + rows, None]
        ac = a.coeffs[start : start + rows, None]
        x3, z3 = ax ^ bx, az ^ bz
        e = _pc(ax & az) + _pc(bx & bz) + 2 * _pc(az & bx) - _pc(x3 & z3)
        c = ac * bc * _IPOW[e % 4]
        if commutator:
            anti = ((_pc(ax & bz) + _pc(az & bx)) & 1).astype(bool)
            x3, z3, c = x3[anti], z3[anti], 2 * c[anti]
        xs_out.append(x3.ravel())
        zs_out.append(z3.ravel())
        cs_out.append(c.ravel())
    return PauliSum(a.n, np.concatenate(xs_out), np.concatenate(zs_out), np.concatenate(cs_out))


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``[a, b] = ab - ba``; only anticommuting string pairs contribute."""
    a._same_n(b)
    return _product(a, b, commutator=True)


def nested_commutator(chain: Sequence[PauliSum], o: PauliSum) -> PauliSum:
    """``[c_1, [c_2, ..., [c_m, o]...]]``, evaluated from the innermost bracket out."""
    acc = o
    for c in reversed(chain):
        acc = commutator(c, acc)
    return acc


def _stabilizer_masks(labels, n):
    codes = [label_index(lbl) for lbl in labels]
    if len(codes) != n:
        raise DimensionError(f"expected {n} labels, got {len(codes)}")
    ax = az = neg = 0
    for q, code in enumerate(codes):
        bx, bz = _LETTERS[STAB_LABELS[code][0]]
        ax |= bx << q
        az |= bz << q
        neg |= (code & 1) << q
    return ax, az, neg


def expect_product_state(p: PauliSum, labels: Sequence) -> complex:
    """``<psi|p|psi>`` for a product of single-qubit stabilizer states.

    Each string contributes ``coeff * prod_q <label_q|P_q|label_q>`` and every
    single-qubit factor is 0, +1 or -1.
    """
    ax, az, neg = _stabilizer_masks(labels, p.n)
    supp = p.xs | p.zs
    match = (((p.xs ^ np.uint64(ax)) | (p.zs ^ np.uint64(az))) & supp) == 0
    signs = 1 - 2 * (_pc(supp & np.uint64(neg)) & 1)
    val = np.sum(p.coeffs[match] * signs[match])
    return val.real if abs(val.imag) < 1e-14 else complex(val)


def product_state(labels: Sequence) -> np.ndarray:
    """Dense state vector of a product of stabilizer states (little-endian)."""
    vec = np.ones(1, dtype=complex)
    for lbl in labels:
        vec = np.kron(STAB_VECTORS[label_index(lbl)], vec)
    return vec


def pauli_trace(x: int, z: int, matrix: np.ndarray) -> complex:
    """``Tr(P(x, z) @ matrix)`` in O(d) without forming P."""
    d = matrix.shape[0]
    w = np.arange(d, dtype=np.uint64)
    x, z = np.uint64(x), np.uint64(z)
    signs = 1 - 2 * (_pc(z & w) & 1)
    return complex(_IPOW[int(_pc(x & z)) % 4] * np.sum(signs * matrix[w, w ^ x]))


def spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def phase_min_distance(u: np.ndarray, v: np.ndarray, tol: float = 1e-10) -> float:
    """``min_phi ||exp(i phi) u - v||_inf``.

    A 64-point scan over the phase locates the basin; golden-section search
    then refines it to ``tol``.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch: {u.shape} vs {v.shape}")

    def f(phi):
        return spectral_norm(np.exp(1j * phi) * u - v)

    grid = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    vals = [f(p) for p in grid]
    k = int(np.argmin(vals))
    step = grid[1] - grid[0]
    lo, hi = grid[k] - step, grid[k] + step
    g = (math.sqrt(5) - 1) / 2
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    return min(vals[k], fc, fd)


def is_unitary(a: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.allclose(a.conj().T @ a, np.eye(a.shape[0]), atol=tol, rtol=0))


def is_hermitian(a: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.allclose(a, a.conj().T, atol=tol, rtol=0))
