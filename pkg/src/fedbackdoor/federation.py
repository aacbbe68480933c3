"""Federated averaging control loop: client selection, local SGD, aggregation,
and round orchestration.

Each round selects K of the N clients, trains each from an immutable snapshot
of the global model, applies the configured defense to every submission, and
folds the updates into the global model as

    G' = G + (eta / n) * sum_i (W_i - G)

with the sum taken in ascending client-id order so results are independent of
worker scheduling. Adversaries active per the attack schedule occupy selection
slots ahead of the random benign draw; inactive adversaries train benignly.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics, nn
from .adversary import (AdversaryConfig, AttackSchedule, active_attackers,
                        adversarial_train, scale_update)
from .data import Dataset, batches
from .defenses import DefenseConfig, apply_defense
from .errors import DimensionError, InputError, ScheduleError
from .seeds import derive_seed


@dataclass(frozen=True)
class FedConfig:
    n_clients: int = 100
    clients_per_round: int = 10
    global_lr: float = 0.1
    benign_lr: float = 0.1
    benign_epochs: int = 2
    batch_size: int = 128
    rounds: int = 100            # total rounds, pretraining included
    pretrain_rounds: int = 50    # attack-free rounds before attack_start
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ValueError(
                f"need 1 <= K <= N, got K={self.clients_per_round} N={self.n_clients}"
            )
        if not self.global_lr > 0:
            raise ValueError(f"global_lr must be > 0, got {self.global_lr}")
        if self.benign_lr < 0 or self.benign_epochs < 1 or self.batch_size < 1:
            raise ValueError("benign_lr >= 0, benign_epochs >= 1, batch_size >= 1 required")
        if self.rounds < 0 or self.pretrain_rounds < 0:
            raise ValueError("rounds and pretrain_rounds must be >= 0")


@dataclass
class ClientUpdate:
    client_id: int
    params: np.ndarray
    is_adversary: bool = False
    gamma_applied: float = 0.0


def select_clients(round_no: int, cfg: FedConfig, schedule: AttackSchedule | None,
                   rng: np.random.Generator) -> list[int]:
    """Exactly K client ids; attackers active this round take the first slots,
    the rest are drawn uniformly without replacement from the other clients."""
    if round_no < 1:
        raise ValueError(f"rounds are 1-based, got {round_no}")
    forced = [cid for _, cid, _ in active_attackers(schedule, round_no)]
    k = cfg.clients_per_round
    if len(forced) > k:
        raise ScheduleError(f"{len(forced)} active adversaries exceed K={k}")
    pool = np.setdiff1d(np.arange(cfg.n_clients), np.asarray(forced, dtype=np.int64))
    fill = rng.choice(pool, size=k - len(forced), replace=False)
    return forced + sorted(int(c) for c in fill)


def local_train(spec: nn.NetworkSpec, global_params: np.ndarray,
                images: np.ndarray, labels: np.ndarray, *,
                lr: float, epochs: int, batch_size: int, seed: int) -> np.ndarray:
    """Plain SGD from the global snapshot; the snapshot is left untouched."""
    if len(labels) == 0:
        raise InputError("client shard is empty")
    params = global_params.copy()
    for epoch in range(epochs):
        epoch_seed = derive_seed(seed, "epoch", epoch)
        for bx, by in batches(images, labels, batch_size, epoch_seed):
            net = nn.Network(spec=spec, params=params, rng_seed=0)
            _, grad = nn.loss_and_grad(net, bx, by)
            params = nn.sgd_step(params, grad, lr)
    return params


def aggregate(global_params: np.ndarray, updates: list[ClientUpdate],
              eta: float, n: int) -> np.ndarray:
    """FedAvg step; deviations are accumulated in float64, in client-id order."""
    if n != len(updates):
        raise DimensionError(f"n={n} but {len(updates)} updates supplied")
    total = np.zeros(global_params.shape, dtype=np.float64)
    for upd in sorted(updates, key=lambda u: u.client_id):
        if upd.params.shape != global_params.shape:
            raise DimensionError(
                f"client {upd.client_id}: update {upd.params.shape} vs global {global_params.shape}"
            )
        total += upd.params.astype(np.float64) - global_params.astype(np.float64)
    out = global_params.astype(np.float64) + (eta / n) * total
    return out.astype(global_params.dtype)


@dataclass
class AdversaryRuntime:
    """One attacker: schedule index, the client it controls, and its test set."""
    index: int
    client_id: int
    cfg: AdversaryConfig
    bd_test: Dataset


@dataclass
class SimState:
    spec: nn.NetworkSpec
    global_params: np.ndarray
    shards: list[tuple[np.ndarray, np.ndarray]]  # per-client (images, labels)
    test: Dataset
    fed: FedConfig
    adversaries: list[AdversaryRuntime] = field(default_factory=list)
    schedule: AttackSchedule | None = None
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    master_seed: int = 0
    records: list[metrics.RoundRecord] = field(default_factory=list)


def _train_one_client(state: SimState, round_no: int, client_id: int,
                      active: dict[int, tuple[AdversaryRuntime, float]]) -> ClientUpdate:
    images, labels = state.shards[client_id]
    seed = derive_seed(state.master_seed, "batch", round_no, client_id)
    g = state.global_params
    if client_id in active:
        runtime, gamma = active[client_id]
        x = adversarial_train(state.spec, g, images, labels, runtime.cfg,
                              state.fed.batch_size, seed)
        return ClientUpdate(client_id=client_id, params=scale_update(x, g, gamma),
                            is_adversary=True, gamma_applied=gamma)
    params = local_train(state.spec, g, images, labels, lr=state.fed.benign_lr,
                         epochs=state.fed.benign_epochs,
                         batch_size=state.fed.batch_size, seed=seed)
    return ClientUpdate(client_id=client_id, params=params)


def run_round(state: SimState, round_no: int,
              pool: ThreadPoolExecutor | None = None) -> metrics.RoundRecord:
    """One full round: select, train, defend, aggregate, evaluate, record."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(derive_seed(state.master_seed, "select", round_no))
    selected = select_clients(round_no, state.fed, state.schedule, rng)

    active = {}
    for idx, cid, gamma in active_attackers(state.schedule, round_no):
        for runtime in state.adversaries:
            if runtime.client_id == cid:
                active[cid] = (runtime, gamma)

    if pool is None:
        updates = [_train_one_client(state, round_no, cid, active) for cid in selected]
    else:
        updates = list(pool.map(
            lambda cid: _train_one_client(state, round_no, cid, active), selected
        ))

    for upd in updates:
        upd.params = apply_defense(upd.params, state.global_params, state.defense,
                                   round_no, upd.client_id)

    state.global_params = aggregate(state.global_params, updates,
                                    state.fed.global_lr, state.fed.clients_per_round)

    ma = metrics.main_accuracy(state.spec, state.global_params, state.test)
    ba = [
        metrics.backdoor_accuracy(state.spec, state.global_params, adv.bd_test,
                                  adv.cfg.trigger.target_class)
        for adv in state.adversaries
    ]
    gammas = [gamma for _, (_, gamma) in sorted(active.items())]
    record = metrics.RoundRecord(
        round=round_no,
        ma=ma,
        ba=ba,
        active_attackers=sorted(active.keys()),
        gamma=gammas[0] if gammas else 0.0,
        defense=state.defense.mode,
        wall_ms=int((time.perf_counter() - t0) * 1000),
    )
    state.records.append(record)
    return record
