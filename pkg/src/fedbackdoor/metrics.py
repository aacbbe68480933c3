"""Accuracy metrics, per-round records, and run output files.

The round CSV schema is fixed:

    round,ma,ba_1,...,ba_m,ba_avg,attackers,gamma,defense,wall_ms

with one ba_k column per configured trigger, floats at 4 decimals, the
active attacker ids joined by ';', and ba_avg the arithmetic mean of the
ba_k values (0.0 when there are none). Records are flushed as they are
appended so a crash keeps all completed rounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset
from .errors import InputError

EVAL_CHUNK = 4096


def predict(spec: nn.NetworkSpec, params: np.ndarray, images: np.ndarray) -> np.ndarray:
    """Argmax class per sample; ties break to the lowest class index."""
    net = nn.Network(spec=spec, params=params, rng_seed=0)
    out = np.empty(len(images), dtype=np.int64)
    for start in range(0, len(images), EVAL_CHUNK):
        chunk = images[start : start + EVAL_CHUNK]
        out[start : start + len(chunk)] = nn.forward(net, chunk).argmax(axis=1)
    return out


def main_accuracy(spec: nn.NetworkSpec, params: np.ndarray, test: Dataset) -> float:
    """Percentage of test samples whose argmax prediction matches the label."""
    if len(test) == 0:
        raise InputError("empty test set")
    correct = int((predict(spec, params, test.images) == test.labels).sum())
    return 100.0 * correct / len(test)


def backdoor_accuracy(spec: nn.NetworkSpec, params: np.ndarray, bd_test: Dataset,
                      target_class: int) -> float:
    """Percentage of triggered samples classified as the attacker's target."""
    if len(bd_test) == 0:
        raise InputError("empty backdoor test set")
    hits = int((predict(spec, params, bd_test.images) == target_class).sum())
    return 100.0 * hits / len(bd_test)


@dataclass
class RoundRecord:
    round: int
    ma: float
    ba: list[float]
    active_attackers: list[int]
    gamma: float
    defense: str
    wall_ms: int

    @property
    def ba_avg(self) -> float:
        return float(np.mean(self.ba)) if self.ba else 0.0


def csv_header(num_triggers: int) -> str:
    ba_cols = [f"ba_{k}" for k in range(1, num_triggers + 1)]
    return ",".join(["round", "ma", *ba_cols, "ba_avg", "attackers", "gamma",
                     "defense", "wall_ms"])


def format_record(rec: RoundRecord) -> str:
    fields = [str(rec.round), f"{rec.ma:.4f}"]
    fields += [f"{v:.4f}" for v in rec.ba]
    fields += [
        f"{rec.ba_avg:.4f}",
        ";".join(str(i) for i in rec.active_attackers),
        f"{rec.gamma:.4f}",
        rec.defense,
        str(rec.wall_ms),
    ]
    return ",".join(fields)


class RoundCsvWriter:
    """Appends one line per round, flushing each so crashes lose nothing."""

    def __init__(self, path, num_triggers: int):
        self.path = Path(path)
        self.num_triggers = num_triggers
        try:
            self._fh = open(self.path, "w", newline="")
            self._fh.write(csv_header(num_triggers) + "\n")
            self._fh.flush()
        except OSError as exc:
            raise OSError(f"cannot write round CSV at {self.path}: {exc}") from exc

    def append(self, rec: RoundRecord) -> None:
        if len(rec.ba) != self.num_triggers:
            raise InputError(f"record has {len(rec.ba)} ba values, expected {self.num_triggers}")
        self._fh.write(format_record(rec) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_round_csv(records: list[RoundRecord], path, num_triggers: int | None = None) -> None:
    if num_triggers is None:
        num_triggers = len(records[0].ba) if records else 0
    with RoundCsvWriter(path, num_triggers) as w:
        for rec in records:
            w.append(rec)


def read_round_csv(path) -> list[RoundRecord]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    num_triggers = sum(1 for h in header if h.startswith("ba_") and h != "ba_avg")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        records.append(RoundRecord(
            round=int(parts[0]),
            ma=float(parts[1]),
            ba=[float(v) for v in parts[2 : 2 + num_triggers]],
            active_attackers=[int(v) for v in parts[3 + num_triggers].split(";") if v],
            gamma=float(parts[4 + num_triggers]),
            defense=parts[5 + num_triggers],
            wall_ms=int(parts[6 + num_triggers]),
        ))
    return records


@dataclass
class RunManifest:
    config: dict
    seeds: dict
    dataset_checksums: dict
    code_version: str
    started_at: str
    finished_at: str = ""

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "dataset_checksums": self.dataset_checksums,
            "code_version": self.code_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def write_manifest(manifest: RunManifest, path) -> None:
    try:
        Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=False) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest at {path}: {exc}") from exc


def read_manifest(path) -> RunManifest:
    raw = json.loads(Path(path).read_text())
    return RunManifest(**raw)
