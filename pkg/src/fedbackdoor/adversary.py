"""Malicious-client behavior: poisoned local training, model-replacement
scaling, and the three attack participation schedules.

Scenarios:
  single_shot         each attacker participates exactly once, spaced `gap`
                      rounds apart, submitting a gamma-scaled replacement
                      (default gamma 100 = participants / global_lr).
  multiple_shot       all attackers participate every round from the attack
                      start onward with no scaling (gamma 1).
  semi_multiple_shot  all attackers participate for `attack_rounds` rounds
                      with gamma 100 / #attackers, then stop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import batches
from .errors import DimensionError, ScheduleError
from .seeds import derive_seed
from .triggers import TriggerSpec, poison_batch

SCENARIOS = ("single_shot", "multiple_shot", "semi_multiple_shot")


@dataclass(frozen=True)
class AdversaryConfig:
    trigger: TriggerSpec
    poison_lr: float = 0.05
    poison_epochs: int = 6
    poison_fraction: float = 0.3125  # 40 of a 128 batch

    def __post_init__(self):
        if not self.poison_lr > 0:
            raise ValueError(f"poison_lr must be > 0, got {self.poison_lr}")
        if self.poison_epochs < 1:
            raise ValueError(f"poison_epochs must be >= 1, got {self.poison_epochs}")
        if not 0.0 < self.poison_fraction <= 1.0:
            raise ValueError(f"poison_fraction must be in (0, 1], got {self.poison_fraction}")


@dataclass(frozen=True)
class AttackSchedule:
    scenario: str
    attacker_ids: tuple[int, ...]
    attack_start_round: int
    gap: int = 10
    attack_rounds: int = 100
    gamma: float | None = None  # None -> scenario default

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ScheduleError(f"unknown scenario {self.scenario!r}, expected {SCENARIOS}")
        if len(set(self.attacker_ids)) != len(self.attacker_ids):
            raise ScheduleError(f"attacker ids must be distinct: {self.attacker_ids}")
        if not self.attacker_ids:
            raise ScheduleError("schedule needs at least one attacker")
        if self.attack_start_round < 1:
            raise ScheduleError(f"attack_start_round must be >= 1, got {self.attack_start_round}")

    @property
    def num_attackers(self) -> int:
        return len(self.attacker_ids)

    def effective_gamma(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        if self.scenario == "single_shot":
            return 100.0
        if self.scenario == "multiple_shot":
            return 1.0
        return 100.0 / self.num_attackers


def schedule_query(sched: AttackSchedule, attacker_index: int, round_no: int
                   ) -> tuple[bool, float]:
    """Whether attacker `attacker_index` attacks in `round_no`, and its gamma."""
    if not 0 <= attacker_index < sched.num_attackers:
        raise ScheduleError(
            f"attacker index {attacker_index} outside 0..{sched.num_attackers - 1}"
        )
    gamma = sched.effective_gamma()
    start = sched.attack_start_round
    if sched.scenario == "single_shot":
        active = round_no == start + sched.gap * attacker_index
    elif sched.scenario == "multiple_shot":
        active = round_no >= start
    else:  # semi_multiple_shot
        active = start <= round_no < start + sched.attack_rounds
    return active, gamma if active else 0.0


def active_attackers(sched: AttackSchedule | None, round_no: int
                     ) -> list[tuple[int, int, float]]:
    """(attacker_index, client_id, gamma) for every attacker active this round."""
    if sched is None:
        return []
    out = []
    for idx, cid in enumerate(sched.attacker_ids):
        active, gamma = schedule_query(sched, idx, round_no)
        if active:
            out.append((idx, cid, gamma))
    return out


def adversarial_train(spec: nn.NetworkSpec, global_params: np.ndarray,
                      images: np.ndarray, labels: np.ndarray,
                      adv: AdversaryConfig, batch_size: int, seed: int) -> np.ndarray:
    """Train from the global snapshot with per-batch poisoning; returns X.

    Every batch is passed through poison_batch before the gradient step, so
    the attacker optimizes the mix of its clean shard and triggered samples.
    """
    params = global_params.copy()
    poison_rng = np.random.default_rng(derive_seed(seed, "poison"))
    for epoch in range(adv.poison_epochs):
        epoch_seed = derive_seed(seed, "epoch", epoch)
        for bx, by in batches(images, labels, batch_size, epoch_seed):
            px, py = poison_batch(bx, by, adv.trigger, adv.poison_fraction, poison_rng)
            net = nn.Network(spec=spec, params=params, rng_seed=0)
            _, grad = nn.loss_and_grad(net, px, py)
            params = nn.sgd_step(params, grad, adv.poison_lr)
    return params


def scale_update(x: np.ndarray, g: np.ndarray, gamma: float) -> np.ndarray:
    """Model-replacement submission L = gamma * (X - G) + G."""
    if x.shape != g.shape:
        raise DimensionError(f"attacker model {x.shape} vs global {g.shape}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return x.dtype.type(gamma) * (x - g) + g
