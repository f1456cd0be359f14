"""End-to-end experiment runner behind the command-line interface.

Every artifact is a deterministic function of the configuration: the dataset,
model and report files are byte-identical across reruns with the same seed.
Wall-clock timings are written to a separate ``timings.json`` so they never
perturb ``report.json``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .applications import (
    ClassicalState,
    exact_mean_value,
    noise_benchmark,
    predict_mean_value,
    random_classical_state,
    train_classifier,
)
from .cluster import truncation_order
from .dataset import Dataset
from .errors import HamlearnError
from .hamiltonian import EvolutionPlan, load_plan
from .learner import (
    LearnConfig,
    learn_local_operators,
    load_model,
    sample_size,
    save_model,
)
from .pauli import PauliSum, PauliTerm
from .reconstruct import per_local_errors, reconstruction_error, sew_channel
from .rng import substream
from .simulator import DENSITY_LIMIT, NoiseModel, plan_unitary, sample_dataset

log = logging.getLogger("hamlearn")

MODES = ("simulate", "learn", "evaluate", "verify", "classify", "bench-noise", "full")
DEFAULT_SWEEP = (0.01, 0.02, 0.04)
MAX_DEFAULT_SHOTS = 1_000_000
DATA_DIR = Path(__file__).parent / "data"


class StageError(HamlearnError):
    def __init__(self, stage: str, message: str, exit_code: int = 1):
        self.stage = stage
        self.exit_code = exit_code
        super().__init__(f"[{stage}] {message}")


@dataclass
class ExperimentConfig:
    mode: str = "full"
    plan: str | None = None
    seed: int = 0
    shots: int | None = None
    epsilon: float = 0.1
    delta: float = 0.05
    gamma: float | None = None
    trunc_m: int | None = None
    kappa: float = 0.5
    threads: int | None = None
    out: str = "hamlearn-out"
    dataset: str | None = None
    model: str | None = None
    threshold: bool = True
    trials: int = 20

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Load a JSON config; relative file paths resolve against the config's folder."""
        path = Path(path)
        doc = json.loads(path.read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        for key in ("plan", "dataset", "model"):
            if doc.get(key) and not Path(doc[key]).is_absolute():
                doc[key] = str(path.parent / doc[key])
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)

    def echo(self) -> dict:
        """Fields that influence results (output location and worker count do not)."""
        doc = asdict(self)
        doc.pop("out")
        doc.pop("threads")
        return doc


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _sha256_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(value):
    """Replace non-finite floats so the report stays strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


class Runner:
    def __init__(self, config: ExperimentConfig):
        self.cfg = config
        self.out = Path(config.out)
        self.report: dict[str, Any] = {"config": config.echo(), "digests": {}}
        self.timings: dict[str, float] = {}
        self.plan: EvolutionPlan | None = None
        self.trunc = None
        self.data: Dataset | None = None
        self.locals = None
        self.tables: dict[str, list] = {"per_local": [], "error_vs_n": [], "noise_sweep": []}

    # helpers -------------------------------------------------------------

    def _stage(self, name, fn):
        start = time.perf_counter()
        log.info("stage %s", name)
        try:
            return fn()
        except StageError:
            raise
        except (HamlearnError, ValueError, OSError) as exc:
            raise StageError(name, str(exc)) from exc
        finally:
            self.timings[name] = round(time.perf_counter() - start, 6)

    def _learn_config(self) -> LearnConfig:
        return LearnConfig(epsilon=self.cfg.epsilon, delta=self.cfg.delta, N_override=self.cfg.shots,
                           M_override=self.cfg.trunc_m, threshold=self.cfg.threshold)

    # stages --------------------------------------------------------------

    def load_plan(self):
        if not self.cfg.plan:
            raise StageError("parse", "no plan file given (--plan)", 2)
        path = Path(self.cfg.plan)
        if not path.exists():
            raise StageError("parse", f"plan file not found: {path}", 2)
        self.plan = load_plan(path)
        self.report["digests"]["plan"] = _sha256_file(path)
        eps_prime = min(self.cfg.epsilon / (12 * self.plan.n), 0.5)
        trunc = truncation_order(self.plan, eps_prime, kappa=self.cfg.kappa)
        if self.cfg.trunc_m is not None:
            trunc = trunc.with_order(self.cfg.trunc_m)
        self.trunc = trunc
        self.report["truncation"] = {
            "M": trunc.M, "M_formula": trunc.M_formula, "regime": trunc.regime,
            "epsilon_prime": eps_prime, "t_star": trunc.t_star, "bound": trunc.bound(),
            "n": self.plan.n, "K": self.plan.K, "locality": self.plan.locality,
            "degree": self.plan.degree, "t": self.plan.t,
        }

    def simulate(self):
        plan, cfg = self.plan, self.cfg
        lc = self._learn_config()
        N = sample_size(lc, plan.n, plan.K, plan.locality, plan.degree, self.trunc.M)
        capped = cfg.shots is None and N > MAX_DEFAULT_SHOTS
        N = min(N, MAX_DEFAULT_SHOTS) if cfg.shots is None else N
        noise = NoiseModel(cfg.gamma) if cfg.gamma else None
        self.data = sample_dataset(plan, N, cfg.seed, noise)
        path = self.out / "dataset.bin"
        blob = self.data.to_bytes()
        path.write_bytes(blob)
        self.report["digests"]["dataset"] = _sha256_bytes(blob)
        self.report["dataset"] = {"N": N, "shots_capped": capped, "gamma": self.data.gamma}

    def load_dataset(self):
        path = Path(self.cfg.dataset) if self.cfg.dataset else self.out / "dataset.bin"
        if not path.exists():
            raise StageError("learn", f"dataset file not found: {path}", 2)
        self.data = Dataset.load(path)
        if self.data.n != self.plan.n:
            raise StageError("learn", f"dataset has {self.data.n} qubits, plan has {self.plan.n}")
        self.report["digests"]["dataset"] = _sha256_file(path)
        self.report["dataset"] = {"N": self.data.N, "gamma": self.data.gamma}

    def learn(self):
        self.locals = learn_local_operators(self.data, self.plan.graph, self.trunc,
                                            threshold=self.cfg.threshold)
        path = self.out / "model.json"
        save_model(path, self.locals, {"N": self.data.N, "M": self.trunc.M, "seed": self.data.seed,
                                       "threshold": self.cfg.threshold})
        self.report["digests"]["model"] = _sha256_file(path)
        self.report["model"] = {"locals": len(self.locals),
                                "candidates_per_qubit": [lo.L for lo in self.locals[::3]]}

    def load_locals(self):
        path = Path(self.cfg.model) if self.cfg.model else self.out / "model.json"
        if not path.exists():
            raise StageError("evaluate", f"model file not found: {path}", 2)
        self.locals, _ = load_model(path)
        self.report["digests"]["model"] = _sha256_file(path)

    def evaluate(self):
        ch = sew_channel(self.locals)
        rep = reconstruction_error(ch, self.plan, self.cfg.trials, self.cfg.seed, self.trunc.bound())
        self.report["reconstruction"] = rep.to_dict()
        self.tables["per_local"] = [
            (lo.qubit, lo.letter, err) for lo, err in zip(ch.sources, rep.per_local_inf_norms)
        ]

    def error_vs_n(self):
        rows = []
        prev = None
        u = plan_unitary(self.plan)
        for frac in (16, 4, 1):
            count = max(1, self.data.N // frac)
            locs = learn_local_operators(self.data.head(count), self.plan.graph, self.trunc,
                                         threshold=self.cfg.threshold)
            errs = [e for lo in locs for e in lo.stderr.values()]
            mean_err = float(np.mean(errs))
            ratio = mean_err / prev if prev else None
            rows.append((count, mean_err, max(per_local_errors(locs, self.plan, u)), ratio))
            prev = mean_err
        self.tables["error_vs_n"] = rows
        self.report["error_vs_n"] = [
            {"N": r[0], "mean_stderr": r[1], "max_local_error": r[2], "stderr_ratio": r[3]} for r in rows
        ]

    def verify(self):
        plan = self.plan
        u = plan_unitary(plan)
        rng = substream(self.cfg.seed, "verify-panel")
        rows = []
        for k in range(10):
            phi = random_classical_state(rng, plan.n, min(4, 1 << plan.n))
            q = int(rng.integers(plan.n))
            o = PauliSum.from_word(plan.n, [q], "XYZ"[k % 3])
            mv = predict_mean_value(self.locals, phi, o)
            truth = exact_mean_value(u, phi, o)
            rows.append({"qubit": q, "observable": "XYZ"[k % 3], "predicted": mv.value,
                         "stderr": mv.stderr, "exact": truth, "abs_error": abs(mv.value - truth)})
        self.report["verify"] = {"pairs": rows, "max_abs_error": max(r["abs_error"] for r in rows)}

    def classify(self):
        plan = self.plan
        u = plan_unitary(plan)
        rng = substream(self.cfg.seed, "classify-panel")
        o = PauliTerm.single(plan.n, 0, "Z")
        heis = u.conj().T @ o.to_dense() @ u
        states: list[ClassicalState] = [
            random_classical_state(rng, plan.n, min(3, 1 << plan.n)) for _ in range(40)
        ]
        labels = [float(np.real(s.dense().conj() @ heis @ s.dense())) for s in states]
        model = train_classifier(states, labels, o, plan.graph, self.trunc)
        loss = float(np.mean(np.abs(
            np.array([model.predict_state(s) for s in states]) - np.array(labels))))
        self.report["classify"] = {"basis_size": len(model.basis), "rank": model.rank,
                                   "residual": model.residual, "mean_loss": loss,
                                   "ridge": model.ridge}

    def bench(self):
        if self.plan.n > DENSITY_LIMIT:
            raise StageError("bench-noise", f"noise benchmark needs n <= {DENSITY_LIMIT}")
        gammas = (self.cfg.gamma,) if self.cfg.gamma else DEFAULT_SWEEP
        lc = self._learn_config()
        N = self.cfg.shots or 100_000
        sweep = []
        for g in gammas:
            rep = noise_benchmark(self.plan, NoiseModel(g), lc, self.cfg.seed, N=N)
            sweep.append(rep.to_dict())
        self.report["noise"] = sweep
        self.tables["noise_sweep"] = [(r["gamma"], r["max_gap"], r["reference"]) for r in sweep]

    # driver ----------------------------------------------------------------

    def run(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        try:
            self._chain(self.cfg.mode)
        except StageError as exc:
            # Keep whatever was produced so far and record where the chain stopped.
            self.report["error"] = {"stage": exc.stage, "message": str(exc)}
            self._write()
            raise
        self._write()
        return self.report

    def _chain(self, mode: str) -> None:
        self._stage("parse", self.load_plan)
        if mode in ("simulate", "full"):
            self._stage("simulate", self.simulate)
        if mode in ("learn", "full"):
            if self.data is None:
                self._stage("learn", self.load_dataset)
            self._stage("learn", self.learn)
        elif mode in ("evaluate", "verify", "classify"):
            have_model = self.cfg.model or (self.out / "model.json").exists()
            if have_model and not self.cfg.dataset:
                self._stage("load-model", self.load_locals)
            else:
                self._stage("learn", self.load_dataset)
                self._stage("learn", self.learn)
        if mode in ("evaluate", "full"):
            self._stage("evaluate", self.evaluate)
        if mode == "full":
            self._stage("error-vs-n", self.error_vs_n)
        if mode in ("verify", "full"):
            self._stage("verify", self.verify)
        if mode in ("classify", "full"):
            self._stage("classify", self.classify)
        if mode == "bench-noise":
            self._stage("bench-noise", self.bench)

    def _write(self) -> None:
        self.report = _clean(self.report)
        _write_json(self.out / "report.json", self.report)
        _write_json(self.out / "timings.json", self.timings)
        emit_tables(self.tables, self.out)


def run(config: ExperimentConfig) -> dict:
    return Runner(config).run()


TABLE_HEADERS = {
    "per_local": ("qubit", "observable", "inf_norm_error"),
    "error_vs_n": ("N", "mean_stderr", "max_local_error", "stderr_ratio"),
    "noise_sweep": ("gamma", "max_gap", "reference"),
}


def emit_tables(tables: dict[str, list], out) -> list[Path]:
    """Write one CSV per table; an empty table yields a header-only file."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, header in TABLE_HEADERS.items():
        path = out / f"{name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in tables.get(name, []):
                writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
        written.append(path)
    return written


def bundled(name: str) -> Path:
    """Path of a file shipped in the package data folder."""
    return DATA_DIR / name
