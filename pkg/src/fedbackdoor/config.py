"""Experiment configuration: strict JSON schema, defaults, and preset configs.

Configs are JSON with five blocks (dataset, model, federation, partition,
defense) plus an adversary list and a schedule. Unknown keys anywhere are
rejected and validation reports every violation at once, so a typo cannot
silently fall back to a default mid-experiment.

Relative dataset paths resolve against $FEDBACKDOOR_DATA_DIR (default
`./data`).
"""

from __future__ import annotations

import importlib.resources
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import nn
from .adversary import SCENARIOS, AdversaryConfig, AttackSchedule
from .defenses import DEFENSE_MODES, DefenseConfig
from .errors import ConfigError
from .federation import FedConfig
from .triggers import TRIGGER_SHAPES, get_trigger

DATA_DIR_ENV = "FEDBACKDOOR_DATA_DIR"


@dataclass(frozen=True)
class DatasetPaths:
    name: str
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str

    def resolved(self, base: Path) -> "DatasetPaths":
        def fix(p):
            path = Path(p)
            return str(path if path.is_absolute() else base / path)
        return DatasetPaths(self.name, fix(self.train_images), fix(self.train_labels),
                            fix(self.test_images), fix(self.test_labels))

    def files(self) -> dict[str, str]:
        return {
            "train_images": self.train_images,
            "train_labels": self.train_labels,
            "test_images": self.test_images,
            "test_labels": self.test_labels,
        }


@dataclass(frozen=True)
class AdversaryBlock:
    trigger_id: int
    target_class: int | None = None
    poison_lr: float = 0.05
    poison_epochs: int = 6
    poison_fraction: float = 0.3125
    pixel_value: float = 1.0


@dataclass(frozen=True)
class ScheduleBlock:
    scenario: str
    gap: int = 10
    attack_rounds: int = 100
    attack_start_round: int | None = None  # None -> pretrain_rounds + 1
    gamma: float | None = None             # None -> scenario default


@dataclass
class ExperimentConfig:
    name: str
    dataset: DatasetPaths
    profile: str
    fed: FedConfig
    alpha: float
    adversaries: list[AdversaryBlock]
    schedule: ScheduleBlock | None
    defense: DefenseConfig
    output_dir: str
    seed: int
    num_classes: int = 10
    partition_seed: int | None = None  # None -> derived from master seed

    # ---- derived builders -------------------------------------------------

    def network_spec(self) -> nn.NetworkSpec:
        return nn.build_spec(self.profile, self.num_classes)

    def adversary_configs(self) -> list[AdversaryConfig]:
        out = []
        for blk in self.adversaries:
            trig = get_trigger(blk.trigger_id, blk.target_class, blk.pixel_value)
            out.append(AdversaryConfig(trigger=trig, poison_lr=blk.poison_lr,
                                       poison_epochs=blk.poison_epochs,
                                       poison_fraction=blk.poison_fraction))
        return out

    def attack_schedule(self) -> AttackSchedule | None:
        if self.schedule is None or not self.adversaries:
            return None
        start = self.schedule.attack_start_round
        if start is None:
            start = self.fed.pretrain_rounds + 1
        return AttackSchedule(
            scenario=self.schedule.scenario,
            attacker_ids=tuple(range(len(self.adversaries))),
            attack_start_round=start,
            gap=self.schedule.gap,
            attack_rounds=self.schedule.attack_rounds,
            gamma=self.schedule.gamma,
        )

    def to_dict(self) -> dict:
        """Fully-resolved snapshot; parsing it back reproduces this config."""
        return {
            "name": self.name,
            "dataset": {"name": self.dataset.name, **self.dataset.files()},
            "model": {"profile": self.profile, "num_classes": self.num_classes},
            "federation": {
                "n_clients": self.fed.n_clients,
                "clients_per_round": self.fed.clients_per_round,
                "global_lr": self.fed.global_lr,
                "benign_lr": self.fed.benign_lr,
                "benign_epochs": self.fed.benign_epochs,
                "batch_size": self.fed.batch_size,
                "rounds": self.fed.rounds,
                "pretrain_rounds": self.fed.pretrain_rounds,
            },
            "partition": {"alpha": self.alpha, "seed": self.partition_seed},
            "adversaries": [
                {
                    "trigger_id": a.trigger_id,
                    "target_class": a.target_class,
                    "poison_lr": a.poison_lr,
                    "poison_epochs": a.poison_epochs,
                    "poison_fraction": a.poison_fraction,
                    "pixel_value": a.pixel_value,
                }
                for a in self.adversaries
            ],
            "schedule": None if self.schedule is None else {
                "scenario": self.schedule.scenario,
                "gap": self.schedule.gap,
                "attack_rounds": self.schedule.attack_rounds,
                "attack_start_round": self.schedule.attack_start_round,
                "gamma": self.schedule.gamma,
            },
            "defense": {
                "mode": self.defense.mode,
                "clip_bound": self.defense.clip_bound,
                "noise_sigma": self.defense.noise_sigma,
                "noise_seed": self.defense.noise_seed,
            },
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Parsing with exhaustive error reporting.
# ---------------------------------------------------------------------------

def _section(raw: dict, key: str, known: tuple[str, ...], problems: list[str],
             required: tuple[str, ...] = ()) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        problems.append(f"{key}: expected an object")
        return {}
    for k in sec:
        if k not in known:
            problems.append(f"{key}.{k}: unknown key")
    for k in required:
        if k not in sec:
            problems.append(f"{key}.{k}: missing required key")
    return sec


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def from_dict(raw: dict, source: str = "<dict>",
              check_files: bool = True) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError([f"{source}: top level must be an object"])
    problems: list[str] = []

    top_known = ("name", "dataset", "model", "federation", "partition",
                 "adversaries", "schedule", "defense", "output_dir", "seed")
    for k in raw:
        if k not in top_known:
            problems.append(f"{k}: unknown key")

    name = raw.get("name", Path(source).stem or "experiment")

    ds_sec = _section(raw, "dataset", ("name", "train_images", "train_labels",
                                       "test_images", "test_labels"), problems,
                      required=("train_images", "train_labels", "test_images",
                                "test_labels"))
    dataset = DatasetPaths(
        name=ds_sec.get("name", "dataset"),
        train_images=ds_sec.get("train_images", ""),
        train_labels=ds_sec.get("train_labels", ""),
        test_images=ds_sec.get("test_images", ""),
        test_labels=ds_sec.get("test_labels", ""),
    ).resolved(data_dir())

    model_sec = _section(raw, "model", ("profile", "num_classes"), problems)
    profile = model_sec.get("profile", "mlp")
    num_classes = model_sec.get("num_classes", 10)
    if profile not in nn.PROFILES:
        problems.append(f"model.profile: {profile!r} not in {nn.PROFILES}")

    fed_sec = _section(raw, "federation", ("n_clients", "clients_per_round",
                                           "global_lr", "benign_lr", "benign_epochs",
                                           "batch_size", "rounds", "pretrain_rounds"),
                       problems)
    fed_kwargs = dict(
        n_clients=fed_sec.get("n_clients", 100),
        clients_per_round=fed_sec.get("clients_per_round", 10),
        global_lr=fed_sec.get("global_lr", 0.1),
        benign_lr=fed_sec.get("benign_lr", 0.1),
        benign_epochs=fed_sec.get("benign_epochs", 2),
        batch_size=fed_sec.get("batch_size", 128),
        rounds=fed_sec.get("rounds", 100),
        pretrain_rounds=fed_sec.get("pretrain_rounds", 50),
    )
    try:
        fed = FedConfig(**fed_kwargs)
    except ValueError as exc:
        problems.append(f"federation: {exc}")
        fed = None

    part_sec = _section(raw, "partition", ("alpha", "seed"), problems)
    alpha = part_sec.get("alpha", 0.5)
    partition_seed = part_sec.get("seed")
    if not isinstance(alpha, (int, float)) or not alpha > 0:
        problems.append(f"partition.alpha: must be > 0, got {alpha!r}")

    adv_raw = raw.get("adversaries", [])
    adversaries: list[AdversaryBlock] = []
    if not isinstance(adv_raw, list):
        problems.append("adversaries: expected a list")
        adv_raw = []
    adv_known = ("trigger_id", "target_class", "poison_lr", "poison_epochs",
                 "poison_fraction", "pixel_value")
    for i, blk in enumerate(adv_raw):
        where = f"adversaries[{i}]"
        if not isinstance(blk, dict):
            problems.append(f"{where}: expected an object")
            continue
        for k in blk:
            if k not in adv_known:
                problems.append(f"{where}.{k}: unknown key")
        if "trigger_id" not in blk:
            problems.append(f"{where}.trigger_id: missing required key")
            continue
        tid = blk["trigger_id"]
        if not isinstance(tid, int) or not 1 <= tid <= len(TRIGGER_SHAPES):
            problems.append(f"{where}.trigger_id: must be 1..{len(TRIGGER_SHAPES)}, got {tid!r}")
            continue
        target = blk.get("target_class")
        if target is not None and not 0 <= target < num_classes:
            problems.append(f"{where}.target_class: {target} outside [0, {num_classes})")
        if not blk.get("poison_lr", 0.05) > 0:
            problems.append(f"{where}.poison_lr: must be > 0")
        if blk.get("poison_epochs", 6) < 1:
            problems.append(f"{where}.poison_epochs: must be >= 1")
        if not 0.0 < blk.get("poison_fraction", 0.3125) <= 1.0:
            problems.append(f"{where}.poison_fraction: must be in (0, 1]")
        if not 0.0 <= blk.get("pixel_value", 1.0) <= 1.0:
            problems.append(f"{where}.pixel_value: must be in [0, 1]")
        adversaries.append(AdversaryBlock(
            trigger_id=tid,
            target_class=target,
            poison_lr=blk.get("poison_lr", 0.05),
            poison_epochs=blk.get("poison_epochs", 6),
            poison_fraction=blk.get("poison_fraction", 0.3125),
            pixel_value=blk.get("pixel_value", 1.0),
        ))
    tids = [a.trigger_id for a in adversaries]
    if len(set(tids)) != len(tids):
        problems.append(f"adversaries: trigger ids must be distinct, got {tids}")

    schedule = None
    if raw.get("schedule") is not None:
        sch_sec = _section(raw, "schedule", ("scenario", "gap", "attack_rounds",
                                             "attack_start_round", "gamma"),
                           problems, required=("scenario",))
        scenario = sch_sec.get("scenario", "multiple_shot")
        if scenario not in SCENARIOS:
            problems.append(f"schedule.scenario: {scenario!r} not in {SCENARIOS}")
        gamma = sch_sec.get("gamma")
        if gamma is not None and gamma < 0:
            problems.append(f"schedule.gamma: must be >= 0, got {gamma}")
        schedule = ScheduleBlock(
            scenario=scenario if scenario in SCENARIOS else "multiple_shot",
            gap=sch_sec.get("gap", 10),
            attack_rounds=sch_sec.get("attack_rounds", 100),
            attack_start_round=sch_sec.get("attack_start_round"),
            gamma=gamma,
        )
    if adversaries and schedule is None:
        problems.append("schedule: required when adversaries are configured")
    if schedule is not None and fed is not None and adversaries:
        if schedule.scenario in ("multiple_shot", "semi_multiple_shot") \
                and len(adversaries) > fed.clients_per_round:
            problems.append(
                f"schedule: {len(adversaries)} simultaneous adversaries exceed "
                f"clients_per_round={fed.clients_per_round}"
            )

    def_sec = _section(raw, "defense", ("mode", "clip_bound", "noise_sigma",
                                        "noise_seed"), problems)
    seed = raw.get("seed", 0)
    try:
        defense = DefenseConfig(
            mode=def_sec.get("mode", "none"),
            clip_bound=def_sec.get("clip_bound", 5.0),
            noise_sigma=def_sec.get("noise_sigma", 0.001),
            noise_seed=def_sec.get("noise_seed", seed),
        )
    except ValueError as exc:
        problems.append(f"defense: {exc}")
        defense = DefenseConfig()

    if check_files and not problems:
        for role, path in dataset.files().items():
            if not Path(path).exists():
                problems.append(f"dataset.{role}: file not found: {path}")

    if problems:
        raise ConfigError([f"{source}: {p}" for p in problems])

    return ExperimentConfig(
        name=name,
        dataset=dataset,
        profile=profile,
        fed=fed,
        alpha=float(alpha),
        adversaries=adversaries,
        schedule=schedule,
        defense=defense,
        output_dir=raw.get("output_dir", str(Path("runs") / name)),
        seed=int(seed),
        num_classes=int(num_classes),
        partition_seed=partition_seed,
    )


def parse_config(path, check_files: bool = True) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError([f"config file not found: {p}"])
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{p}: invalid JSON: {exc}"]) from exc
    return from_dict(raw, source=str(p), check_files=check_files)


# ---------------------------------------------------------------------------
# Presets shipped with the package.
# ---------------------------------------------------------------------------

def _preset_root():
    return importlib.resources.files("fedbackdoor").joinpath("presets")


def list_presets() -> list[str]:
    return sorted(
        p.name[:-5] for p in _preset_root().iterdir() if p.name.endswith(".json")
    )


def load_preset(name: str, check_files: bool = True) -> ExperimentConfig:
    res = _preset_root().joinpath(f"{name}.json")
    if not res.is_file():
        raise ConfigError([f"unknown preset {name!r}; available: {list_presets()}"])
    raw = json.loads(res.read_text())
    return from_dict(raw, source=f"preset:{name}", check_files=check_files)


def resolve_config(path_or_preset: str, check_files: bool = True) -> ExperimentConfig:
    """A filesystem path wins; otherwise the name is looked up as a preset."""
    if Path(path_or_preset).exists():
        return parse_config(path_or_preset, check_files=check_files)
    return load_preset(path_or_preset, check_files=check_files)
