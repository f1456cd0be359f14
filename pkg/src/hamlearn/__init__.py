"""Learn short-time Hamiltonian dynamics from randomized single-qubit measurements.

Typical flow::

    plan = parse_spec(text)
    trunc = truncation_order(plan, 1e-3)
    data = sample_dataset(plan, 200_000, seed=42)
    locals_ = learn_local_operators(data, plan.graph, trunc)
    channel = sew_channel(locals_)
"""

from .applications import (
    BenchReport,
    ClassicalState,
    ClassifierModel,
    Region2D,
    mc_sew_2d,
    noise_benchmark,
    predict_mean_value,
    strip_partition,
    train_classifier,
)
from .cluster import (
    Cluster,
    TruncationPlan,
    enumerate_clusters,
    heisenberg_from_clusters,
    term_count_bound,
    truncated_heisenberg,
    truncation_bound,
    truncation_order,
)
from .dataset import Dataset, MeasurementRecord
from .errors import CapacityError, DimensionError, HamlearnError, ParseError
from .hamiltonian import (
    EvolutionPlan,
    HamiltonianSpec,
    InteractionGraph,
    Term,
    interaction_graph,
    parse_spec,
    serialize_plan,
)
from .learner import (
    LearnConfig,
    LearnedLocalOperator,
    candidate_paulis,
    estimate_coefficient,
    estimate_u,
    learn_local_operators,
    sample_size,
)
from .pauli import PauliSum, PauliTerm, commutator, expect_product_state, mul, nested_commutator, phase_min_distance
from .reconstruct import (
    CompilePlan,
    ErrorReport,
    LearnedChannel,
    apply_channel,
    compile_unitary,
    reconstruction_error,
    sew_channel,
    trotter_depth,
)
from .simulator import NoiseModel, evolve, exact_heisenberg, noisy_evolve, sample_dataset

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
