import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import kron_word
from hamlearn.errors import CapacityError, DimensionError
from hamlearn.pauli import (
    PauliSum,
    PauliTerm,
    commutator,
    expect_product_state,
    mul,
    nested_commutator,
    pauli_trace,
    phase_min_distance,
    product_state,
)

PHASES = [1, 1j, -1, -1j]


def term_dense(t: PauliTerm):
    return PHASES[t.phase] * kron_word(t.label)


words = lambda n: st.text(alphabet="IXYZ", min_size=n, max_size=n)  # noqa: E731


def sparse_sums(max_n=4, max_terms=5):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_n))
        items = draw(st.lists(
            st.tuples(words(n), st.floats(-1, 1, allow_nan=False)), min_size=0, max_size=max_terms))
        return n, items
    return build()


def make_sum(n, items):
    return PauliSum.from_terms(n, [(w, c) for w, c in items]) if items else PauliSum.zero(n)


def dense_of_items(n, items):
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for w, c in items:
        out += c * kron_word(w)
    return out


class TestMul:
    def test_x_times_y(self):
        r = mul(PauliTerm.from_label("X"), PauliTerm.from_label("Y"))
        assert r.label == "Z" and r.coefficient == 1j

    def test_identity_left(self):
        for w in ["X", "YZ", "ZIX"]:
            p = PauliTerm.from_label(w)
            assert mul(PauliTerm.from_label("I" * len(w)), p) == p

    def test_two_qubit_example_against_dense(self):
        a, b = PauliTerm.from_label("XZ"), PauliTerm.from_label("ZZ")
        r = mul(a, b)
        assert r.label == "YI" and r.coefficient == -1j
        assert np.allclose(term_dense(r), kron_word("XZ") @ kron_word("ZZ"))

    def test_all_two_qubit_pairs(self):
        labels = ["".join(p) for p in itertools.product("IXYZ", repeat=2)]
        for a, b in itertools.product(labels, labels):
            r = mul(PauliTerm.from_label(a), PauliTerm.from_label(b))
            assert np.allclose(term_dense(r), kron_word(a) @ kron_word(b)), (a, b)

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            mul(PauliTerm.from_label("X"), PauliTerm.from_label("XX"))

    @given(words(3), words(3), words(3), st.integers(0, 3), st.integers(0, 3))
    def test_associative_and_unit_phase(self, a, b, c, pa, pb):
        ta, tb, tc = PauliTerm.from_label(a, pa), PauliTerm.from_label(b, pb), PauliTerm.from_label(c)
        left, right = mul(mul(ta, tb), tc), mul(ta, mul(tb, tc))
        assert left == right
        assert abs(abs(left.coefficient) - 1) < 1e-15

    def test_support_and_identity(self):
        t = PauliTerm.from_label("IXIY")
        assert t.support == (1, 3) and t.weight == 2
        assert PauliTerm.from_label("II").is_identity

    def test_mask_bounds(self):
        with pytest.raises(DimensionError):
            PauliTerm(2, 0b100, 0)


class TestPauliSum:
    def test_prune_threshold(self):
        s = PauliSum.from_terms(1, {"X": 1e-13, "Z": 1.0})
        assert s.labels() == {"Z": 1.0}

    def test_duplicate_merge(self):
        s = PauliSum.from_terms(2, [("XZ", 0.5), ("XZ", 0.25), ("ZZ", 1.0), ("ZZ", -1.0)])
        assert s.labels() == {"XZ": 0.75}

    def test_hermitian_flag(self):
        s = PauliSum.from_label("XY", 0.3)
        assert s.is_hermitian()
        assert not (s * 1j).is_hermitian()
        with pytest.raises(ValueError):
            (s * 1j).real(tol=1e-12)

    def test_to_dense_examples(self):
        assert np.allclose(PauliSum.from_label("Z").to_dense(), np.diag([1, -1]))
        assert np.allclose(PauliSum.zero(2).to_dense(), np.zeros((4, 4)))
        m = (PauliSum.from_label("X", 0.5) + PauliSum.from_label("Z", 0.5)).to_dense()
        assert np.allclose(np.linalg.eigvalsh(m), [-math.sqrt(2) / 2, math.sqrt(2) / 2])

    def test_to_dense_capacity(self):
        with pytest.raises(CapacityError):
            PauliSum.identity(11).to_dense()

    @settings(max_examples=60)
    @given(sparse_sums())
    def test_to_dense_matches_kron(self, case):
        n, items = case
        assert np.allclose(make_sum(n, items).to_dense(), dense_of_items(n, items))

    @settings(max_examples=60)
    @given(sparse_sums())
    def test_from_dense_roundtrip(self, case):
        n, items = case
        s = make_sum(n, items)
        assert PauliSum.from_dense(dense_of_items(n, items)).allclose(s, 1e-10)

    def test_tensor_embed_restrict(self):
        a = PauliSum.from_label("XY", 2.0)
        b = PauliSum.from_label("Z")
        assert a.tensor(b).labels() == {"XYZ": 2.0}
        e = b.embed(4, [2])
        assert e.labels() == {"IIZI": 1.0}
        assert e.restrict([2]).labels() == {"Z": 1.0}
        with pytest.raises(DimensionError):
            e.restrict([0, 1])

    def test_coefficient_lookup(self):
        s = PauliSum.from_terms(2, {"XZ": 0.5, "YY": -0.25})
        assert s.coefficient("YY") == -0.25
        assert s.coefficient("ZZ") == 0

    def test_pauli_trace(self, rng):
        a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        for w in ["XYZ", "IZI", "YYI"]:
            t = PauliTerm.from_label(w)
            assert np.isclose(pauli_trace(t.x, t.z, a), np.trace(kron_word(w) @ a))


class TestCommutators:
    def test_z_x(self):
        c = commutator(PauliSum.from_label("Z"), PauliSum.from_label("X"))
        assert c.labels() == {"Y": 2j}

    def test_identity_commutes(self):
        c = commutator(PauliSum.from_label("XY"), PauliSum.identity(2))
        assert len(c) == 0

    def test_nested_example(self):
        xx, yy, z0 = PauliSum.from_label("XX"), PauliSum.from_label("YY"), PauliSum.from_label("ZI")
        got = nested_commutator([xx, yy], z0).to_dense()
        X, Y, Z = kron_word("XX"), kron_word("YY"), kron_word("ZI")
        inner = Y @ Z - Z @ Y
        assert np.allclose(got, X @ inner - inner @ X)

    @settings(max_examples=200)
    @given(sparse_sums(), st.data())
    def test_commutator_matches_dense(self, case, data):
        n, items_a = case
        items_b = data.draw(st.lists(st.tuples(words(n), st.floats(-1, 1, allow_nan=False)), max_size=5))
        a, b = make_sum(n, items_a), make_sum(n, items_b)
        da, db = dense_of_items(n, items_a), dense_of_items(n, items_b)
        assert np.allclose(nested_commutator([a], b).to_dense(), da @ db - db @ da, atol=1e-10)

    @settings(max_examples=40)
    @given(sparse_sums(max_n=3))
    def test_product_matches_dense(self, case):
        n, items = case
        s = make_sum(n, items)
        d = dense_of_items(n, items)
        assert np.allclose((s @ s).to_dense(), d @ d, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            commutator(PauliSum.from_label("X"), PauliSum.from_label("XX"))


class TestExpectProductState:
    def test_examples(self):
        assert expect_product_state(PauliSum.from_label("X"), ["X+"]) == 1
        assert expect_product_state(PauliSum.from_label("X"), ["Z+"]) == 0
        assert expect_product_state(PauliSum.from_label("ZX"), ["Z+", "X+"]) == 1
        assert expect_product_state(PauliSum.from_label("YI", 0.5), ["Y-", "Z-"]) == -0.5

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            expect_product_state(PauliSum.from_label("XX"), ["Z+"])

    @settings(max_examples=200)
    @given(sparse_sums(), st.data())
    def test_matches_dense_state(self, case, data):
        n, items = case
        labels = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
        psi = product_state(labels)
        expected = np.vdot(psi, dense_of_items(n, items) @ psi)
        assert np.isclose(expect_product_state(make_sum(n, items), labels), expected.real, atol=1e-12)


class TestPhaseMinDistance:
    def test_identical(self, rng):
        u = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
        assert phase_min_distance(u, u) < 1e-9

    def test_global_phase_removed(self, rng):
        u = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
        assert phase_min_distance(u, np.exp(1j * np.pi / 3) * u) < 1e-9

    def test_identity_vs_z(self):
        # |e^{i phi} - 1| and |e^{i phi} + 1| are balanced at phi = pi/2.
        assert math.isclose(phase_min_distance(np.eye(2), np.diag([1.0, -1.0])), 2 * math.sin(math.pi / 4),
                            rel_tol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            phase_min_distance(np.eye(2), np.eye(4))

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_nonnegative(self, seed):
        r = np.random.default_rng(seed)
        u = np.linalg.qr(r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4)))[0]
        v = np.linalg.qr(r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4)))[0]
        a, b = phase_min_distance(u, v), phase_min_distance(v, u)
        assert a >= 0 and abs(a - b) < 1e-9
        assert a > 1e-6  # generic unitaries are not phase-equivalent
