import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamlearn.applications import (
    ClassicalState,
    exact_mean_value,
    feature_matrix,
    mc_enumerate,
    mc_sew_2d,
    noise_benchmark,
    population_locals,
    predict_mean_value,
    random_classical_state,
    state_expectation,
    strip_partition,
    train_classifier,
    traceless_zero_check,
)
from hamlearn.cluster import truncated_heisenberg, truncation_order
from hamlearn.errors import CapacityError
from hamlearn.hamiltonian import parse_spec, tfim_chain, tfim_grid
from hamlearn.learner import LearnConfig, candidate_paulis, exact_locals, learn_local_operators
from hamlearn.pauli import PauliSum, PauliTerm
from hamlearn.simulator import NoiseModel, exact_heisenberg, noisy_heisenberg, plan_unitary, sample_dataset


def single(word, t):
    return parse_spec({"n": 1, "steps": [{"time": t, "terms": [{"qubits": [0], "coeff": 1.0, "pauli": word}]}]})


class TestClassicalState:
    def test_normalization_enforced(self):
        with pytest.raises(ValueError):
            ClassicalState.from_configs(2, [("00", 1.0), ("11", 1.0)])
        s = ClassicalState.from_configs(2, [("00", 1.0), ("11", 1.0)], normalize=True)
        assert s.R == 2 and np.isclose(np.linalg.norm(s.dense()), 1)

    def test_empty_and_duplicates(self):
        with pytest.raises(ValueError):
            ClassicalState(1, np.array([], dtype=np.int64), np.array([]))
        with pytest.raises(ValueError):
            ClassicalState(1, np.array([0, 0]), np.array([1, 1]) / math.sqrt(2))

    def test_bitstring_order(self):
        # character q of the bitstring is qubit q
        s = ClassicalState.from_configs(3, [("100", 1.0)])
        assert s.bits[0] == 1

    @settings(max_examples=40)
    @given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 6))
    def test_reduced_and_expectation(self, seed, n, R):
        r = np.random.default_rng(seed)
        s = random_classical_state(r, n, R)
        psi = s.dense()
        rho = np.outer(psi, psi.conj())
        qubits = sorted(r.choice(n, size=int(r.integers(1, n + 1)), replace=False).tolist())
        word = "".join(r.choice(list("IXYZ"), size=n))
        q = PauliTerm.from_label(word)
        assert np.isclose(state_expectation(s, q), np.real(psi.conj() @ q.to_dense() @ psi))
        small = PauliSum.from_label(word).restrict(qubits) if set(q.support) <= set(qubits) else None
        if small is not None:
            assert np.isclose(np.trace(small.to_dense() @ s.reduced(qubits)), np.trace(q.to_dense() @ rho))


class TestMeanValue:
    def test_identity_plan(self):
        plan = parse_spec({"n": 3, "steps": [{"time": 0.0, "terms": [{"qubits": [0, 1], "coeff": 1.0, "pauli": "ZZ"}]}]})
        mv = predict_mean_value(exact_locals(plan), ClassicalState.basis(3), PauliSum.from_word(3, [1], "Z"))
        assert mv.value == pytest.approx(1.0)

    def test_rotation(self):
        plus = ClassicalState.from_configs(1, [("0", 1), ("1", 1)], normalize=True)
        mv = predict_mean_value(exact_locals(single("Z", 0.1)), plus, PauliSum.from_label("X"))
        assert mv.value == pytest.approx(math.cos(0.2))

    @settings(max_examples=15)
    @given(st.integers(0, 10**6))
    def test_exact_locals_match_dense(self, seed):
        r = np.random.default_rng(seed)
        plan = tfim_chain(4, 0.3, K=2)
        phi = random_classical_state(r, 4, 3)
        word = "".join(r.choice(list("IXYZ"), size=4))
        o = PauliSum.from_terms(4, [(word, 0.7), ("ZIII", 0.3)])
        got = predict_mean_value(exact_locals(plan), phi, o)
        assert got.value == pytest.approx(exact_mean_value(plan_unitary(plan), phi, o), abs=1e-10)

    def test_truncated_locals_within_bound(self):
        plan = tfim_chain(4, 0.03)
        trunc = truncation_order(plan, 1e-3).with_order(2)
        from hamlearn.learner import truncated_locals
        phi = ClassicalState.from_configs(4, [("0000", 1), ("0110", 1j)], normalize=True)
        for q in range(4):
            o = PauliSum.from_word(4, [q], "X")
            got = predict_mean_value(truncated_locals(plan, trunc), phi, o).value
            assert abs(got - exact_mean_value(plan_unitary(plan), phi, o)) <= trunc.bound()

    @pytest.mark.slow
    def test_learned_tfim(self):
        plan = tfim_chain(4, 0.05)
        locals_ = learn_local_operators(sample_dataset(plan, 200000, 31), plan.graph, 1)
        u = plan_unitary(plan)
        r = np.random.default_rng(2)
        for _ in range(5):
            phi = random_classical_state(r, 4, 2)
            o = PauliSum.from_word(4, [int(r.integers(4))], "XYZ"[int(r.integers(3))])
            mv = predict_mean_value(locals_, phi, o)
            assert abs(mv.value - exact_mean_value(u, phi, o)) <= 0.1
            assert mv.stderr > 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict_mean_value(exact_locals(tfim_chain(2, 0.1)), ClassicalState.basis(2), PauliSum.from_label("XXX"))


def grid_ops(plan, letter="Z"):
    u = plan_unitary(plan)
    return [exact_heisenberg(plan, PauliTerm.single(plan.n, q, letter), u) for q in range(plan.n)]


class TestMonteCarlo:
    def test_partition(self):
        coords = [(r, c) for r in range(5) for c in range(3)]
        part = strip_partition(coords, 1)
        assert part.width == 2
        assert part.members(1) == [q for q, (r, _) in enumerate(coords) if r in (0, 1, 4)]
        assert part.min_separation >= 2 * 1
        with pytest.raises(ValueError):
            strip_partition(coords, 0)

    def test_identity_plan_gives_one(self):
        plan = tfim_grid(2, 2, 0.0)
        part = strip_partition(plan.coords, 1)
        est = mc_sew_2d(grid_ops(plan), part, 500, 1)
        assert est.estimate == pytest.approx(1.0) and est.stderr == pytest.approx(0.0, abs=1e-12)

    def test_enumeration_identities_3x3(self):
        plan = tfim_grid(3, 3, 0.05)
        ops = grid_ops(plan)
        part = strip_partition(plan.coords, 1)
        info = mc_enumerate(ops, part, 9)
        assert abs(info["p"].sum() - 1) <= 1e-10
        z_all = PauliSum.from_label("Z" * 9)
        truth = exact_mean_value(plan_unitary(plan), ClassicalState.basis(9), z_all)
        assert abs(info["mean"] - truth) <= 1e-10
        assert abs(info["mean"] - info["direct"]) <= 1e-10
        assert abs(info["variance"] - (info["gamma1"] * info["gamma2"] - abs(info["mean"]) ** 2)) <= 1e-6
        est = mc_sew_2d(ops, part, 4000, 3)
        assert abs(est.estimate - truth) <= 3 * est.stderr
        assert est.variance <= info["gamma1"] * info["gamma2"] + 1e-9

    def test_deterministic(self):
        plan = tfim_grid(2, 2, 0.1)
        ops = grid_ops(plan)
        part = strip_partition(plan.coords, 1)
        assert tuple(mc_sew_2d(ops, part, 300, 5)) == tuple(mc_sew_2d(ops, part, 300, 5))
        with pytest.raises(ValueError):
            mc_sew_2d(ops, part, 0, 5)


class TestClassifier:
    def setup_method(self):
        self.plan = tfim_chain(3, 0.04)
        self.o = PauliTerm.single(3, 1, "X")
        self.basis = candidate_paulis(self.plan.graph, 1, 1)

    def test_exact_interpolation(self):
        r = np.random.default_rng(0)
        states = [random_classical_state(r, 3, 3) for _ in range(len(self.basis) // 2)]
        q1 = self.basis[0]
        y = [state_expectation(s, q1) for s in states]
        model = train_classifier(states, y, self.o, self.plan.graph, 1)
        assert model.residual <= 1e-8 and model.ridge == 0

    def test_synthetic_labels_loss(self):
        trunc = truncation_order(self.plan, 0.01).with_order(1)
        u = plan_unitary(self.plan)
        heis = exact_heisenberg(self.plan, self.o, u)
        r = np.random.default_rng(1)
        states = [random_classical_state(r, 3, 4) for _ in range(120)]
        y = [np.real(s.dense().conj() @ heis @ s.dense()) for s in states]
        model = train_classifier(states, y, self.o, self.plan.graph, trunc)
        rms = model.residual / math.sqrt(len(states))
        assert rms <= trunc.bound() + 3 * 1e-10
        # the truncated expansion itself lies in the span
        vm = truncated_heisenberg(self.plan, self.o, trunc)
        keys = {(q.x, q.z) for q in model.basis}
        assert all(k in keys for k, _ in vm.items() if k != (0, 0))

    @pytest.mark.filterwarnings("ignore:feature matrix is rank deficient")
    def test_permutation_invariance(self):
        r = np.random.default_rng(2)
        states = [random_classical_state(r, 3, 2) for _ in range(40)]
        y = r.normal(size=40)
        a = train_classifier(states, y, self.o, self.plan.graph, 1)
        perm = r.permutation(40)
        b = train_classifier([states[k] for k in perm], y[perm], self.o, self.plan.graph, 1)
        probe = [random_classical_state(r, 3, 3) for _ in range(10)]
        for s in probe:
            assert a.predict_state(s) == pytest.approx(b.predict_state(s), abs=1e-10)

    @pytest.mark.filterwarnings("ignore:feature matrix is rank deficient")
    def test_residual_monotone_in_basis(self):
        r = np.random.default_rng(3)
        states = [random_classical_state(r, 3, 3) for _ in range(60)]
        y = r.normal(size=60)
        res = [train_classifier(states, y, self.o, self.plan.graph, 1, basis=self.basis[:k]).residual
               for k in range(1, len(self.basis) + 1, 4)]
        assert all(b <= a + 1e-10 for a, b in zip(res, res[1:]))

    def test_rank_deficient_warns(self):
        s = ClassicalState.basis(3)
        with pytest.warns(RuntimeWarning):
            model = train_classifier([s, s], [1.0, 1.0], self.o, self.plan.graph, 1, basis=self.basis[:5])
        assert model.ridge > 0

    def test_predict_density_consistent(self):
        r = np.random.default_rng(4)
        states = [random_classical_state(r, 3, 3) for _ in range(30)]
        model = train_classifier(states, r.normal(size=30), self.o, self.plan.graph, 1)
        s = states[0]
        assert model.predict_density(np.outer(s.dense(), s.dense().conj())) == pytest.approx(model.predict_state(s))
        assert feature_matrix([s], model.basis).shape == (1, len(model.basis))

    def test_mismatched_inputs(self):
        with pytest.raises(ValueError):
            train_classifier([ClassicalState.basis(3)], [1.0, 2.0], self.o, self.plan.graph, 1)


class TestNoise:
    def test_single_qubit_shrink(self):
        plan = single("X", 0.3)
        for g in (0.0, 0.1, 0.5):
            got = PauliSum.from_dense(noisy_heisenberg(plan, NoiseModel(g), PauliTerm.from_label("Z")))
            ref = PauliSum.from_dense(exact_heisenberg(plan, PauliTerm.from_label("Z")))
            assert got.allclose(ref * (1 - g), 1e-12)

    def test_population_gaps_vanish_without_noise(self):
        plan = tfim_chain(2, 0.05)
        rep = noise_benchmark(plan, NoiseModel(0.0), LearnConfig(0.1, 0.05, M_override=1), 3, N=20000, states=4)
        assert rep.max_population_gap <= 1e-9
        assert rep.max_gap <= 0.3
        assert rep.reference == 0 and math.isnan(rep.ratio)
        assert len(rep.gaps) == len(rep.observables) == 3 * 2 + 1
        assert "learned" not in rep.to_dict()

    def test_gamma_one_zeroes_traceless(self):
        plan = tfim_chain(2, 0.05)
        cfg = LearnConfig(0.1, 0.05, M_override=1, threshold=False)
        rep = noise_benchmark(plan, NoiseModel(1.0), cfg, 4, N=20000, states=2)
        ok, worst = traceless_zero_check(rep.learned)
        assert ok, worst

    def test_population_locals_exact_at_zero_noise(self):
        plan = tfim_chain(2, 0.2)
        for a, b in zip(population_locals(plan, NoiseModel(0.0), 1, restrict=False), exact_locals(plan)):
            assert a.estimate.allclose(b.estimate, 1e-9)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            noise_benchmark(tfim_chain(7, 0.05), NoiseModel(0.1), LearnConfig(), 0, N=10)
