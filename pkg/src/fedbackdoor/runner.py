"""Experiment execution: build simulator state from a config, drive the round
loop, and write outputs (round CSV, manifest, final checkpoint).

Checkpoint format: a single JSON line describing the architecture, then the
flat float32 parameter vector, little-endian.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import metrics, nn
from .config import ExperimentConfig
from .data import load_idx, dirichlet_partition
from .errors import SimulationError
from .federation import AdversaryRuntime, SimState, run_round
from .seeds import STREAMS, derive_seed
from .triggers import backdoor_testset


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_state(cfg: ExperimentConfig) -> SimState:
    spec = cfg.network_spec()
    train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels,
                     name=f"{cfg.dataset.name}-train")
    test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels,
                    name=f"{cfg.dataset.name}-test")

    part_seed = cfg.partition_seed
    if part_seed is None:
        part_seed = derive_seed(cfg.seed, "partition")
    partition = dirichlet_partition(train, cfg.fed.n_clients, cfg.alpha, part_seed)
    shards = [
        (train.images[idx], train.labels[idx]) for idx in partition.client_indices
    ]

    adversaries = []
    for i, adv_cfg in enumerate(cfg.adversary_configs()):
        adversaries.append(AdversaryRuntime(
            index=i,
            client_id=i,  # attackers control the first clients of the partition
            cfg=adv_cfg,
            bd_test=backdoor_testset(test, adv_cfg.trigger),
        ))

    net = nn.init_network(spec, derive_seed(cfg.seed, "init"))
    return SimState(
        spec=spec,
        global_params=net.params,
        shards=shards,
        test=test,
        fed=cfg.fed,
        adversaries=adversaries,
        schedule=cfg.attack_schedule(),
        defense=cfg.defense,
        master_seed=cfg.seed,
    )


def save_checkpoint(path, spec: nn.NetworkSpec, params: np.ndarray) -> None:
    header = {
        "input_shape": list(spec.input_shape),
        "num_classes": spec.num_classes,
        "layers": [
            {"kind": type(ly).__name__, **dataclasses.asdict(ly)} for ly in spec.layers
        ],
        "param_count": int(params.size),
        "dtype": "<f4",
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode("utf-8"))
        f.write(np.ascontiguousarray(params, dtype="<f4").tobytes())


_LAYER_KINDS = {cls.__name__: cls for cls in (nn.Conv2D, nn.MaxPool, nn.ReLU,
                                              nn.Flatten, nn.Dense)}


def load_checkpoint(path) -> tuple[nn.NetworkSpec, np.ndarray]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    layers = []
    for entry in header["layers"]:
        kwargs = {k: v for k, v in entry.items() if k != "kind"}
        layers.append(_LAYER_KINDS[entry["kind"]](**kwargs))
    spec = nn.NetworkSpec(
        input_shape=tuple(header["input_shape"]),
        layers=tuple(layers),
        num_classes=header["num_classes"],
    )
    params = np.frombuffer(raw, dtype="<f4").copy()
    if params.size != header["param_count"]:
        raise SimulationError(
            f"{path}: checkpoint holds {params.size} params, header says {header['param_count']}"
        )
    return spec, params


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None,
                   threads: int = 1, log=print) -> dict:
    """Execute all rounds; returns a summary dict with final MA / BA values."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = metrics.RunManifest(
        config=cfg.to_dict(),
        seeds={
            "master": cfg.seed,
            "streams": {s: derive_seed(cfg.seed, s) for s in STREAMS},
        },
        dataset_checksums={role: _sha256(path)
                           for role, path in cfg.dataset.files().items()},
        code_version=version(),
        started_at=_utcnow(),
    )
    metrics.write_manifest(manifest, out / "manifest.json")

    state = build_state(cfg)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    started = time.perf_counter()
    try:
        with metrics.RoundCsvWriter(out / "rounds.csv", len(state.adversaries)) as csv:
            for round_no in range(1, cfg.fed.rounds + 1):
                record = run_round(state, round_no, pool)
                csv.append(record)
                if log and (round_no % 25 == 0 or round_no == cfg.fed.rounds):
                    log(f"[{cfg.name}] round {round_no}/{cfg.fed.rounds} "
                        f"ma={record.ma:.2f} ba_avg={record.ba_avg:.2f}")
    finally:
        if pool is not None:
            pool.shutdown()

    save_checkpoint(out / "model.ckpt", state.spec, state.global_params)
    manifest.finished_at = _utcnow()
    metrics.write_manifest(manifest, out / "manifest.json")

    final = state.records[-1] if state.records else None
    summary = {
        "name": cfg.name,
        "rounds": cfg.fed.rounds,
        "final_ma": final.ma if final else float("nan"),
        "final_ba_avg": final.ba_avg if final else 0.0,
        "wall_s": round(time.perf_counter() - started, 1),
        "out_dir": str(out),
    }
    if log:
        log(f"[{cfg.name}] done: final MA {summary['final_ma']:.2f}, "
            f"BA_Avg {summary['final_ba_avg']:.2f} ({summary['wall_s']}s) -> {out}")
    return summary


def csv_rows_without_timing(path) -> list[str]:
    """CSV lines with the wall_ms column dropped.

    Determinism comparisons use this view: every simulated quantity must
    match exactly, while wall-clock timing is inherently run-dependent.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        rows.append(line.rsplit(",", 1)[0])
    return rows


def verify_manifest(manifest_path, threads: int = 1, log=print) -> bool:
    """Re-run the manifest's config snapshot and diff the round CSVs."""
    manifest_path = Path(manifest_path)
    manifest = metrics.read_manifest(manifest_path)
    from .config import from_dict  # late import to avoid a cycle

    cfg = from_dict(manifest.config, source=str(manifest_path))
    original_csv = manifest_path.parent / "rounds.csv"
    rerun_dir = manifest_path.parent / "verify-rerun"
    run_experiment(cfg, out_dir=str(rerun_dir), threads=threads, log=log)
    ok = csv_rows_without_timing(original_csv) == csv_rows_without_timing(
        rerun_dir / "rounds.csv"
    )
    if log:
        log("verify: PASS (round records identical)" if ok
            else "verify: FAIL (round records differ)")
    return ok


def version() -> str:
    from . import __version__
    return __version__
