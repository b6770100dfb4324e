"""Declarative experiment suites: transfer-learning and federated runs.

A suite is an :class:`ExperimentSpec` (methods x condition sets x seeds
plus hyperparameters), enumerated into independent runs. Each run
pretrains a backbone per its method, then scores it with a frozen-
feature linear probe on an evaluation split that always contains all
eight conditions. Every run is deterministic in (spec, seed): rerunning
a suite reproduces results.csv byte for byte.

Two sampling budgets are compared fairly in the federated suites: FL
methods train rounds x local_batches minibatches per client through the
averaging server, and the local baselines train the same number of
minibatches per client without it.
"""

from __future__ import annotations

import hashlib
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .augment import AugmentConfig
from .data import (
    ALL_CONDITIONS,
    ALL_REGIMES,
    DEFAULT_PROFILE,
    OperatingRegime,
    WindowDataset,
    filter_subset,
    generate_dataset,
    train_test_split,
)
from .errors import ConfigError
from .evaluation import evaluate_probe, extract_features, train_linear_probe
from .federation import make_clients, run_federation
from .models import barlow_config, init_weights, supervised_config
from .optim import Adam
from .training import run_sampled_batches, train_barlow_epochs, train_supervised_epochs

TL_METHODS = ("supervised_source", "barlow_source", "barlow_target")
FL_METHODS = ("supervised_local", "supervised_fl", "barlow_local", "barlow_fl")
N_CLASSES = 8


@dataclass(frozen=True)
class Hyperparameters:
    """Training knobs; defaults follow the experimental protocol where it
    fixes them (1000 epochs / lr 5e-4 for transfer, 1000 rounds x 20
    local batches / lr 2e-4 for federation, trade_off 0.01, 75-epoch
    probe) and documented choices elsewhere."""

    epochs: int = 1000
    learning_rate_tl: float = 5e-4
    rounds: int = 1000
    local_batches: int = 20
    learning_rate_fl: float = 2e-4
    trade_off: float = 0.01
    probe_epochs: int = 75
    batch_size: int = 128
    probe_learning_rate: float = 1e-3
    probe_batch_size: int = 128
    eval_fraction: float = 0.8
    data_seconds: float = 60.0
    sample_rate: int = 12000
    dataset_seed: int = 2024
    min_scale: float = 0.1
    mask_size: int = 64
    loss_variant: str = "canonical"
    reset_client_optimizer: bool = False

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(min_scale=self.min_scale, mask_size=self.mask_size)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str  # "tl" | "fl"
    methods: tuple[str, ...]
    seeds: tuple[int, ...]
    domain_pairs: tuple[tuple[OperatingRegime, OperatingRegime], ...] = ()
    tl_sets: tuple[tuple[int, tuple[frozenset, ...]], ...] = ()
    fl_sets: tuple[tuple[frozenset, frozenset], ...] = ()
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    def __post_init__(self):
        if self.kind not in ("tl", "fl"):
            raise ConfigError(f"kind must be tl or fl, got {self.kind!r}")
        if not self.methods or not self.seeds:
            raise ConfigError("methods and seeds must be non-empty")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate methods")
        if self.kind == "tl":
            unknown = set(self.methods) - set(TL_METHODS)
            if unknown:
                raise ConfigError(f"unknown tl methods {sorted(unknown)}")
            if not self.domain_pairs:
                raise ConfigError("tl spec needs at least one source->target pair")
            for source, target in self.domain_pairs:
                if source == target:
                    raise ConfigError(
                        f"source and target regimes must differ, got {source.display}"
                    )
            if not self.tl_sets:
                raise ConfigError("tl spec needs condition sets")
            for n, sets in self.tl_sets:
                if not sets:
                    raise ConfigError(f"no condition sets listed for n={n}")
                for conditions in sets:
                    if len(conditions) != n:
                        raise ConfigError(
                            f"condition set {sorted(c.name for c in conditions)} "
                            f"does not have {n} conditions"
                        )
        else:
            unknown = set(self.methods) - set(FL_METHODS)
            if unknown:
                raise ConfigError(f"unknown fl methods {sorted(unknown)}")
            if not self.fl_sets:
                raise ConfigError("fl spec needs client condition sets")
            for first, second in self.fl_sets:
                if first & second:
                    raise ConfigError(
                        "client condition sets must be disjoint, got overlap "
                        f"{sorted(c.name for c in first & second)}"
                    )

    def regimes_needed(self) -> set:
        if self.kind == "fl":
            return set(ALL_REGIMES)
        needed = set()
        for source, target in self.domain_pairs:
            needed.update((source, target))
        return needed


@dataclass(frozen=True)
class RunSpec:
    kind: str
    method: str
    seed: int
    set_index: int
    n_conditions: int
    conditions: tuple  # tl: ConditionLabel tuple; fl: (tuple, tuple)
    source: OperatingRegime | None = None
    target: OperatingRegime | None = None

    @property
    def run_id(self) -> str:
        if self.kind == "tl":
            pair = f"{self.source.display}-{self.target.display}"
            return (
                f"tl_{self.method}_{pair}_n{self.n_conditions}"
                f"_set{self.set_index}_seed{self.seed}"
            )
        return f"fl_{self.method}_set{self.set_index}_seed{self.seed}"

    @property
    def condition_set_name(self) -> str:
        if self.kind == "tl":
            return "+".join(c.name for c in self.conditions)
        return "|".join("+".join(c.name for c in side) for side in self.conditions)


@dataclass(frozen=True)
class ResultRow:
    run_id: str
    kind: str
    method: str
    n_conditions: int
    condition_set: str
    seed: int
    client: str  # "" for tl, "1"/"2" for fl
    accuracy: float

    def sort_key(self):
        return (self.kind, self.method, self.n_conditions,
                self.condition_set, self.seed, self.client)


@dataclass
class SuiteResult:
    spec: ExperimentSpec
    rows: list
    confusions: dict  # (run_id, client) -> ConfusionMatrix
    round_logs: dict  # run_id -> list[RoundRecord]
    timings: dict  # run_id -> seconds


def enumerate_runs(spec: ExperimentSpec) -> list[RunSpec]:
    runs = []
    if spec.kind == "tl":
        for method in spec.methods:
            for source, target in spec.domain_pairs:
                for n, sets in spec.tl_sets:
                    for set_index, conditions in enumerate(sets, start=1):
                        for seed in spec.seeds:
                            runs.append(RunSpec(
                                kind="tl", method=method, seed=seed,
                                set_index=set_index, n_conditions=n,
                                conditions=tuple(sorted(conditions)),
                                source=source, target=target,
                            ))
    else:
        for method in spec.methods:
            for set_index, (first, second) in enumerate(spec.fl_sets, start=1):
                for seed in spec.seeds:
                    runs.append(RunSpec(
                        kind="fl", method=method, seed=seed,
                        set_index=set_index, n_conditions=len(first),
                        conditions=(tuple(sorted(first)), tuple(sorted(second))),
                    ))
    return runs


def build_suite_dataset(spec: ExperimentSpec, profile=DEFAULT_PROFILE) -> WindowDataset:
    return generate_dataset(
        profile,
        conditions=ALL_CONDITIONS,
        regimes=spec.regimes_needed(),
        seconds=spec.hyper.data_seconds,
        sample_rate=spec.hyper.sample_rate,
        seed=spec.hyper.dataset_seed,
    )


def _derived_seeds(run: RunSpec) -> dict:
    """Named integer seeds, all deterministic in the run identity."""
    method_code = (TL_METHODS + FL_METHODS).index(run.method)
    entropy = [
        int(run.seed), 0 if run.kind == "tl" else 1, method_code,
        run.set_index, run.n_conditions,
        int(run.source) if run.source is not None else 255,
        int(run.target) if run.target is not None else 255,
    ]
    words = np.random.SeedSequence(entropy).generate_state(4)
    return {
        "init": int(words[0]),
        "train": int(words[1]),
        "split": int(words[2]),
        "probe": int(words[3]),
    }


def _probe_accuracy(state, config, eval_train, eval_test, hyper, probe_seed):
    features_train = extract_features(state, eval_train, config=config)
    features_test = extract_features(state, eval_test, config=config)
    probe = train_linear_probe(
        features_train,
        eval_train.labels,
        N_CLASSES,
        epochs=hyper.probe_epochs,
        lr=hyper.probe_learning_rate,
        batch_size=hyper.probe_batch_size,
        seed=probe_seed,
    )
    return evaluate_probe(probe, features_test, eval_test.labels, N_CLASSES)


def execute_tl_run(run: RunSpec, hyper: Hyperparameters, dataset: WindowDataset):
    seeds = _derived_seeds(run)
    pretrain_regime = run.target if run.method == "barlow_target" else run.source
    pretrain = filter_subset(dataset, set(run.conditions), {pretrain_regime})
    eval_all8 = filter_subset(dataset, ALL_CONDITIONS, {run.target})
    eval_train, eval_test = train_test_split(eval_all8, hyper.eval_fraction, seeds["split"])
    train_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seeds["train"]))
    )
    if run.method == "supervised_source":
        config = supervised_config(N_CLASSES)
        state = init_weights(config, seeds["init"])
        train_supervised_epochs(
            state, pretrain.windows, pretrain.labels, N_CLASSES,
            epochs=hyper.epochs, optimizer=Adam(lr=hyper.learning_rate_tl),
            batch_size=hyper.batch_size, rng=train_rng, config=config,
        )
    else:
        config = barlow_config()
        state = init_weights(config, seeds["init"])
        train_barlow_epochs(
            state, pretrain.windows,
            epochs=hyper.epochs, optimizer=Adam(lr=hyper.learning_rate_tl),
            batch_size=hyper.batch_size, rng=train_rng, lam=hyper.trade_off,
            aug=hyper.augment_config(), variant=hyper.loss_variant, config=config,
        )
    accuracy, confusion = _probe_accuracy(
        state, config, eval_train, eval_test, hyper, seeds["probe"]
    )
    row = ResultRow(
        run_id=run.run_id, kind="tl", method=run.method,
        n_conditions=run.n_conditions, condition_set=run.condition_set_name,
        seed=run.seed, client="", accuracy=accuracy,
    )
    return [row], {(run.run_id, ""): confusion}, None


def execute_fl_run(run: RunSpec, hyper: Hyperparameters, dataset: WindowDataset):
    seeds = _derived_seeds(run)
    client_sets = [set(side) for side in run.conditions]
    client_data = [filter_subset(dataset, side, ALL_REGIMES) for side in client_sets]
    eval_all8 = filter_subset(dataset, ALL_CONDITIONS, ALL_REGIMES)
    eval_train, eval_test = train_test_split(eval_all8, hyper.eval_fraction, seeds["split"])

    objective = "supervised" if run.method.startswith("supervised") else "barlow_twins"
    config = supervised_config(N_CLASSES) if objective == "supervised" else barlow_config()
    records = []
    if run.method.endswith("_fl"):
        clients = make_clients(client_data, lr=hyper.learning_rate_fl, seed=seeds["train"])
        _global_state, records = run_federation(
            clients,
            rounds=hyper.rounds, method=objective, model_config=config,
            seed=seeds["init"], local_batches=hyper.local_batches,
            batch_size=hyper.batch_size, n_classes=N_CLASSES,
            lam=hyper.trade_off, aug=hyper.augment_config(),
            variant=hyper.loss_variant,
            reset_optimizer_each_round=hyper.reset_client_optimizer,
        )
        client_states = [client.state for client in clients]
    else:
        # budget-matched local baselines: same minibatch count, no server
        client_states = []
        for i, data in enumerate(client_data):
            state = init_weights(config, seeds["init"])
            rng = np.random.Generator(np.random.Philox(
                np.random.SeedSequence([seeds["train"], 0xC11E, i])
            ))
            run_sampled_batches(
                state, data.windows, data.labels, method=objective,
                n_batches=hyper.rounds * hyper.local_batches,
                batch_size=hyper.batch_size,
                optimizer=Adam(lr=hyper.learning_rate_fl), rng=rng,
                n_classes=N_CLASSES, lam=hyper.trade_off,
                aug=hyper.augment_config(), variant=hyper.loss_variant,
                config=config,
            )
            client_states.append(state)

    rows, confusions = [], {}
    for client_index, state in enumerate(client_states, start=1):
        accuracy, confusion = _probe_accuracy(
            state, config, eval_train, eval_test, hyper, seeds["probe"]
        )
        rows.append(ResultRow(
            run_id=run.run_id, kind="fl", method=run.method,
            n_conditions=run.n_conditions, condition_set=run.condition_set_name,
            seed=run.seed, client=str(client_index), accuracy=accuracy,
        ))
        confusions[(run.run_id, str(client_index))] = confusion
    return rows, confusions, records


_WORKER_STATE: dict = {}


def _execute_one(index: int):
    from ._alloc import enable_heap_reuse

    enable_heap_reuse()
    spec = _WORKER_STATE["spec"]
    dataset = _WORKER_STATE["dataset"]
    run = _WORKER_STATE["runs"][index]
    start = time.perf_counter()
    # one BLAS thread: the gemms are too small to share profitably, and
    # results stay identical whatever the worker count
    with threadpool_limits(limits=1):
        if run.kind == "tl":
            rows, confusions, records = execute_tl_run(run, spec.hyper, dataset)
        else:
            rows, confusions, records = execute_fl_run(run, spec.hyper, dataset)
    return index, rows, confusions, records, time.perf_counter() - start


def run_suite(
    spec: ExperimentSpec,
    dataset: WindowDataset | None = None,
    threads: int = 1,
    progress=None,
) -> SuiteResult:
    """Execute every run in the spec; ``threads`` > 1 fans runs out to a
    process pool (results are independent of worker count and collected
    in canonical order)."""
    runs = enumerate_runs(spec)
    if dataset is None:
        dataset = build_suite_dataset(spec)
    _WORKER_STATE.update(spec=spec, dataset=dataset, runs=runs)
    try:
        outcomes = []
        if threads > 1:
            context = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=threads, mp_context=context) as pool:
                for outcome in pool.map(_execute_one, range(len(runs))):
                    outcomes.append(outcome)
                    if progress:
                        progress(runs[outcome[0]].run_id, outcome[4])
        else:
            for index in range(len(runs)):
                outcome = _execute_one(index)
                outcomes.append(outcome)
                if progress:
                    progress(runs[outcome[0]].run_id, outcome[4])
    finally:
        _WORKER_STATE.clear()

    rows, confusions, round_logs, timings = [], {}, {}, {}
    for index, run_rows, run_confusions, records, elapsed in outcomes:
        rows.extend(run_rows)
        confusions.update(run_confusions)
        if records:
            round_logs[runs[index].run_id] = records
        timings[runs[index].run_id] = elapsed
    rows.sort(key=ResultRow.sort_key)
    return SuiteResult(spec=spec, rows=rows, confusions=confusions,
                       round_logs=round_logs, timings=timings)


def run_tl_suite(spec, **kwargs) -> SuiteResult:
    if spec.kind != "tl":
        raise ConfigError("run_tl_suite needs a tl spec")
    return run_suite(spec, **kwargs)


def run_fl_suite(spec, **kwargs) -> SuiteResult:
    if spec.kind != "fl":
        raise ConfigError("run_fl_suite needs an fl spec")
    return run_suite(spec, **kwargs)


# ----------------------------------------------------------------------
# summaries
# ----------------------------------------------------------------------

def group_rows(rows) -> dict:
    """Canonical summary groups.

    tl rows group by (method, n_conditions); fl rows by (method, client)
    plus a pooled (method, overall) group holding per-run client means.
    """
    groups: dict = {}
    for row in rows:
        if row.kind == "tl":
            key = ("tl", row.method, f"n{row.n_conditions}")
            groups.setdefault(key, []).append(row.accuracy)
        else:
            groups.setdefault(("fl", row.method, f"client{row.client}"), []).append(row.accuracy)
    by_run: dict = {}
    for row in rows:
        if row.kind == "fl":
            by_run.setdefault((row.method, row.run_id), []).append(row.accuracy)
    for (method, _run_id), accs in sorted(by_run.items()):
        groups.setdefault(("fl", method, "overall"), []).append(float(np.mean(accs)))
    return groups


def summarize(rows) -> list[tuple]:
    """(kind, method, group, n, mean, std) per group; std is the sample
    standard deviation (n-1), empty when n < 2."""
    table = []
    for (kind, method, group), accs in sorted(group_rows(rows).items()):
        n = len(accs)
        mean = float(np.mean(accs))
        std = float(np.std(accs, ddof=1)) if n > 1 else None
        table.append((kind, method, group, n, mean, std))
    return table


def spec_canonical_text(spec: ExperimentSpec) -> str:
    """Stable serialization used for the manifest hash."""
    lines = [f"kind = {spec.kind}",
             "methods = " + ", ".join(spec.methods),
             "seeds = " + ", ".join(str(s) for s in spec.seeds)]
    if spec.kind == "tl":
        lines.append("domain_pairs = " + ", ".join(
            f"{s.display}->{t.display}" for s, t in spec.domain_pairs))
        for n, sets in spec.tl_sets:
            lines.append(f"conditions_{n} = " + "; ".join(
                "+".join(c.name for c in sorted(s)) for s in sets))
    else:
        lines.append("client_sets = " + "; ".join(
            "+".join(c.name for c in sorted(a)) + " | " + "+".join(c.name for c in sorted(b))
            for a, b in spec.fl_sets))
    hyper = spec.hyper
    for name in sorted(vars(hyper)):
        lines.append(f"{name} = {getattr(hyper, name)}")
    return "\n".join(lines) + "\n"


def spec_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(spec_canonical_text(spec).encode()).hexdigest()[:16]
