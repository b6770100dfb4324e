"""Simulated federated averaging.

The protocol per round: copy the global model to every client, let each
client take a fixed number of local optimizer steps on minibatches
sampled from its private windows, then replace the global model with the
data-weighted average of the client models (weights a_j = examples
consumed this round) and redistribute it.

Clients are in-process objects; the "server" is a synchronization
barrier, not a network endpoint. Raw windows never leave the client
object; only model states cross the boundary. Aggregation order is fixed
by client id so results do not depend on scheduling.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .augment import DEFAULT_AUGMENT, AugmentConfig
from .data import WindowDataset
from .errors import (
    ContractError,
    DegenerateBatchError,
    DegenerateWeightsError,
    FederationStallError,
)
from .models import ModelConfig, ModelState, StateEntry, Tensor, init_weights
from .optim import Adam
from .training import run_sampled_batches

FL_METHODS = ("supervised", "barlow_twins")


@dataclass
class ClientHandle:
    """One simulated client: private data, local model, optimizer state,
    and the per-round consumed-examples counter."""

    id: int
    dataset: WindowDataset
    optimizer: Adam
    rng: np.random.Generator
    state: ModelState | None = None
    data_counter: int = 0


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    client_ids: tuple[int, ...]
    client_losses: tuple[float, ...]
    client_counts: tuple[int, ...]
    global_checksum: str


def make_clients(
    datasets: list[WindowDataset],
    lr: float,
    seed: int,
    client_seeds: list[int] | None = None,
) -> list[ClientHandle]:
    """Clients with id-ordered rng streams derived from ``seed`` (or
    explicit per-client seeds, e.g. to make two clients identical)."""
    clients = []
    for i, dataset in enumerate(datasets):
        if len(dataset) == 0:
            raise ContractError(f"client {i} has an empty dataset")
        entropy = [int(client_seeds[i]), 0xC11E] if client_seeds else [int(seed), 0xC11E, i]
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
        clients.append(ClientHandle(id=i, dataset=dataset, optimizer=Adam(lr=lr), rng=rng))
    return clients


def federated_average(states: list[ModelState], weights) -> ModelState:
    """Entrywise convex combination with coefficients a_j / sum(a).

    Trained parameters and running statistics are averaged alike.
    Normalizing the coefficients first makes weight patterns like
    (a, 0) reproduce the first state bit-exactly.
    """
    if not states:
        raise ContractError("need at least one state to average")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(states),):
        raise ContractError(f"{len(states)} states but weights shape {weights.shape}")
    if np.any(weights < 0):
        raise ContractError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0.0:
        raise DegenerateWeightsError("averaging weights sum to zero")
    coeffs = weights / total

    reference = states[0]
    names = reference.names()
    for state in states[1:]:
        if state.names() != names:
            raise ContractError("states are not index-aligned (architecture mismatch)")
        for entry, ref_entry in zip(state.entries, reference.entries):
            if entry.tensor.data.shape != ref_entry.tensor.data.shape:
                raise ContractError(
                    f"entry {entry.name!r} shape mismatch: "
                    f"{entry.tensor.data.shape} vs {ref_entry.tensor.data.shape}"
                )

    entries = []
    for pos, ref_entry in enumerate(reference.entries):
        acc = coeffs[0] * states[0].entries[pos].tensor.data
        for coeff, state in zip(coeffs[1:], states[1:]):
            acc = acc + coeff * state.entries[pos].tensor.data
        entries.append(
            StateEntry(ref_entry.name, ref_entry.kind, Tensor(acc, requires_grad=True))
        )
    out = ModelState(entries)
    out.arch_hash = reference.arch_hash
    return out


def client_round(
    client: ClientHandle,
    global_state: ModelState,
    n_batches: int = 20,
    *,
    method: str = "supervised",
    batch_size: int = 128,
    n_classes: int = 8,
    lam: float = 0.01,
    aug: AugmentConfig = DEFAULT_AUGMENT,
    variant: str = "canonical",
    reset_optimizer: bool = False,
    config=None,
) -> tuple[ModelState, int, float]:
    """One client's local work for one round.

    Returns (updated state, a_j, mean loss). a_j counts examples
    consumed (n_batches * batch_size). A degenerate batch aborts the
    round for this client: it returns the untouched global copy with
    a_j = 0 so the average excludes it.
    """
    if method not in FL_METHODS:
        raise ContractError(f"unknown federation method {method!r}")
    if len(client.dataset) == 0:
        raise ContractError(f"client {client.id} has no data")
    client.state = global_state.clone()
    client.data_counter = 0
    if reset_optimizer:
        client.optimizer.reset()
    if n_batches == 0:
        return client.state, 0, float("nan")
    try:
        mean_loss = run_sampled_batches(
            client.state,
            client.dataset.windows,
            client.dataset.labels,
            method=method,
            n_batches=n_batches,
            batch_size=batch_size,
            optimizer=client.optimizer,
            rng=client.rng,
            n_classes=n_classes,
            lam=lam,
            aug=aug,
            variant=variant,
            config=config,
        )
    except DegenerateBatchError:
        client.state = global_state.clone()
        client.data_counter = 0
        return client.state, 0, float("nan")
    client.data_counter = n_batches * batch_size
    return client.state, client.data_counter, mean_loss


def run_federation(
    clients: list[ClientHandle],
    *,
    rounds: int = 1000,
    method: str = "supervised",
    model_config: ModelConfig,
    seed: int = 0,
    local_batches: int = 20,
    batch_size: int = 128,
    n_classes: int = 8,
    lam: float = 0.01,
    aug: AugmentConfig = DEFAULT_AUGMENT,
    variant: str = "canonical",
    reset_optimizer_each_round: bool = False,
    initial_state: ModelState | None = None,
) -> tuple[ModelState, list[RoundRecord]]:
    """The full protocol: random global init, then ``rounds`` cycles of
    distribute / train / collect / average / redistribute.

    Deterministic per (clients' seeds, seed). After the final round every
    client holds the final global state.
    """
    if not clients:
        raise ContractError("need at least one client")
    if rounds < 1:
        raise ContractError(f"rounds must be positive, got {rounds}")
    clients = sorted(clients, key=lambda c: c.id)
    global_state = initial_state.clone() if initial_state else init_weights(model_config, seed)
    records = []
    for round_index in range(1, rounds + 1):
        states, weights, losses = [], [], []
        for client in clients:
            state, consumed, mean_loss = client_round(
                client,
                global_state,
                local_batches,
                method=method,
                batch_size=batch_size,
                n_classes=n_classes,
                lam=lam,
                aug=aug,
                variant=variant,
                reset_optimizer=reset_optimizer_each_round,
                config=model_config,
            )
            states.append(state)
            weights.append(consumed)
            losses.append(mean_loss)
        if sum(weights) == 0:
            raise FederationStallError(
                f"every client failed in round {round_index}; cannot average"
            )
        global_state = federated_average(states, weights)
        records.append(
            RoundRecord(
                round_index=round_index,
                client_ids=tuple(c.id for c in clients),
                client_losses=tuple(losses),
                client_counts=tuple(weights),
                global_checksum=global_state.checksum(),
            )
        )
    for client in clients:  # final redistribution
        client.state = global_state.clone()
    return global_state, records


def write_round_log(records: list[RoundRecord], path) -> None:
    """CSV log: one row per (round, client)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "client_id", "mean_loss", "a_j", "global_checksum"])
        for record in records:
            for cid, loss, count in zip(
                record.client_ids, record.client_losses, record.client_counts
            ):
                writer.writerow(
                    [record.round_index, cid, repr(float(loss)), count, record.global_checksum]
                )
