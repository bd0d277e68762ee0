"""Dataset ingestion, sample selection, campaigns and metric aggregation.

A campaign attacks every item of an already-selected dataset, one
untargeted attack per item, with a per-item random seed derived from the
master seed so results are reproducible regardless of scheduling. The
targeted matrix runs one attack per (source class, target class, item)
triple and tabulates per-pair success percentages.

Metric conventions, pinned here and asserted by tests: reported spreads
are population standard deviations; query statistics aggregate over all
attacked images while L0 statistics aggregate over successful attacks
only.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ImageTensor, image_from_png, image_to_png
from .errors import AttackAbortedError, ContractViolationError, DatasetError, OracleError
from .oracle import Oracle, predicted_class
from .search import AttackConfig, AttackGoal, AttackOutcome, rng_from_seed, run_attack

_MASK64 = (1 << 64) - 1


def mix_seed(master: int, index: int) -> int:
    """64-bit mix of the master seed and an item index (splitmix64 finalizer)."""
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class DatasetItem:
    id: str
    label: int
    path: Path | None = None
    tensor: ImageTensor | None = None

    def load(self) -> ImageTensor:
        if self.tensor is not None:
            return self.tensor
        assert self.path is not None
        try:
            return image_from_png(self.path.read_bytes())
        except OSError as exc:
            raise DatasetError(f"cannot read {self.path}: {exc}") from exc


@dataclass
class LabeledDataset:
    items: list[DatasetItem]
    class_count: int

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise DatasetError("dataset ids must be unique")
        for it in self.items:
            if not 0 <= it.label < self.class_count:
                raise DatasetError(f"label {it.label} outside {self.class_count} classes")

    def by_class(self) -> dict[int, list[DatasetItem]]:
        grouped: dict[int, list[DatasetItem]] = {c: [] for c in range(self.class_count)}
        for it in self.items:
            grouped[it.label].append(it)
        return grouped


def load_manifest(manifest_path) -> LabeledDataset:
    """Read a ``id,path,label`` CSV manifest; paths are relative to it."""
    manifest_path = Path(manifest_path)
    try:
        with open(manifest_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id", "path", "label"]:
                raise DatasetError(
                    f"{manifest_path}: manifest header must be id,path,label, got {header}"
                )
            items = []
            for row in reader:
                if not row:
                    continue
                if len(row) != 3:
                    raise DatasetError(f"{manifest_path}: malformed row {row}")
                item_id, rel_path, label_s = row
                try:
                    label = int(label_s)
                except ValueError as exc:
                    raise DatasetError(f"{manifest_path}: bad label {label_s!r}") from exc
                items.append(
                    DatasetItem(id=item_id, label=label, path=manifest_path.parent / rel_path)
                )
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if not items:
        raise DatasetError(f"{manifest_path}: empty manifest")
    class_count = max(it.label for it in items) + 1
    return LabeledDataset(items=items, class_count=max(class_count, 2))


def save_manifest(dataset: LabeledDataset, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "path", "label"])
        for it in dataset.items:
            assert it.path is not None
            writer.writerow([it.id, it.path.relative_to(manifest_path.parent), it.label])


@dataclass
class SelectionResult:
    dataset: LabeledDataset
    counts: dict[int, int]
    warnings: list[str] = field(default_factory=list)


def select_correctly_classified(
    dataset: LabeledDataset, oracle: Oracle, per_class_quota: int | None = None
) -> SelectionResult:
    """Scan the dataset in stored order and keep items the oracle labels
    correctly, until every class holds ``per_class_quota`` items (or the
    dataset runs out)."""
    counts = {c: 0 for c in range(dataset.class_count)}
    kept: list[DatasetItem] = []
    for item in dataset.items:
        if per_class_quota is not None and counts[item.label] >= per_class_quota:
            continue
        image = item.load()
        if predicted_class(oracle.query(image)) == item.label:
            kept.append(item)
            counts[item.label] += 1
        if per_class_quota is not None and all(
            n >= per_class_quota for n in counts.values()
        ):
            break
    warnings = [
        f"class {c}: no correctly classified items" for c, n in counts.items() if n == 0
    ]
    return SelectionResult(
        dataset=LabeledDataset(items=kept, class_count=dataset.class_count),
        counts=counts,
        warnings=warnings,
    )


def aggregate_metrics(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    if len(values) == 0:
        raise ContractViolationError("cannot aggregate an empty metric list")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


@dataclass
class ItemResult:
    item: DatasetItem
    outcome: AttackOutcome | None
    error: str | None = None

    def summary(self) -> dict:
        if self.outcome is None:
            return {"id": self.item.id, "success": False, "error": self.error}
        return {
            "id": self.item.id,
            "success": self.outcome.success,
            "queries": self.outcome.queries,
            "l0": self.outcome.l0,
            "final_loss": self.outcome.final_loss,
        }


@dataclass
class CampaignReport:
    success_rate: float
    iterations_mean: float
    iterations_std: float
    l0_mean: float | None
    l0_std: float | None
    per_image: list[dict]
    config_echo: dict
    wall_time: float

    def to_json_dict(self) -> dict:
        return asdict(self)

    @property
    def failed_items(self) -> list[str]:
        return [s["id"] for s in self.per_image if "error" in s]


def config_echo_dict(cfg: AttackConfig) -> dict:
    return {
        "algorithm": cfg.algorithm.value,
        "restarts": cfg.restarts,
        "iters": cfg.iters,
        "patch_min": cfg.patch_min,
        "patch_max": cfg.patch_max,
        "mapping": cfg.mapping.kind.value,
        "mode": cfg.transfer.value,
        "seed": cfg.seed,
        "early_stop": cfg.early_stop,
    }


def _run_jobs(jobs, worker, workers: int, concurrent_ok: bool):
    # Per-job seeds make results order-independent; collection stays in
    # job order either way.
    if workers > 1 and concurrent_ok and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def run_campaign(
    dataset: LabeledDataset,
    oracle: Oracle,
    cfg: AttackConfig,
    out_dir=None,
    workers: int = 1,
) -> CampaignReport:
    """One untargeted attack per item; selection must already be applied."""
    if not dataset.items:
        raise DatasetError("campaign dataset is empty")
    cfg.validate()
    started = time.perf_counter()

    def worker(job) -> ItemResult:
        index, item = job
        try:
            image = item.load()
            outcome = run_attack(
                image,
                AttackGoal(item.label),
                oracle,
                cfg,
                rng_from_seed(mix_seed(cfg.seed, index)),
            )
            return ItemResult(item, outcome)
        except (AttackAbortedError, OracleError, DatasetError) as exc:
            return ItemResult(item, None, error=str(exc))

    jobs = list(enumerate(dataset.items))
    results = _run_jobs(jobs, worker, workers, oracle.concurrent_safe)

    completed = [r for r in results if r.outcome is not None]
    successes = [r for r in completed if r.outcome.success]
    if completed:
        it_mean, it_std = aggregate_metrics([r.outcome.queries for r in completed])
    else:
        it_mean, it_std = 0.0, 0.0
    if successes:
        l0_mean, l0_std = aggregate_metrics([r.outcome.l0 for r in successes])
    else:
        l0_mean, l0_std = None, None
    report = CampaignReport(
        success_rate=100.0 * len(successes) / len(completed) if completed else 0.0,
        iterations_mean=it_mean,
        iterations_std=it_std,
        l0_mean=l0_mean,
        l0_std=l0_std,
        per_image=[r.summary() for r in results],
        config_echo=config_echo_dict(cfg),
        wall_time=time.perf_counter() - started,
    )
    if out_dir is not None:
        persist_campaign(report, results, out_dir)
    return report


def persist_campaign(report: CampaignReport, results: list[ItemResult], out_dir) -> None:
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    (out / "adversarial").mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")
    with open(out / "per_image.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "success", "queries", "l0", "final_loss"])
        for r in results:
            if r.outcome is None:
                continue
            writer.writerow(
                [
                    r.item.id,
                    "true" if r.outcome.success else "false",
                    r.outcome.queries,
                    r.outcome.l0,
                    repr(r.outcome.final_loss),
                ]
            )
    for r in results:
        if r.outcome is None:
            continue
        with open(out / "trajectories" / f"{r.item.id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["query", "loss"])
            for q, loss in r.outcome.trajectory:
                writer.writerow([q, repr(loss)])
        if r.outcome.adversarial.channels in (1, 3):
            png = image_to_png(r.outcome.adversarial)
            (out / "adversarial" / f"{r.item.id}_adv.png").write_bytes(png)


@dataclass
class MatrixRecord:
    source: int
    target: int
    id: str
    success: bool
    queries: int
    l0: int
    final_loss: float


@dataclass
class TargetedMatrix:
    class_count: int
    cells: list[list[float | None]]
    attacked: list[list[int]]
    records: list[MatrixRecord]
    warnings: list[str]

    @property
    def overall_success_rate(self) -> float:
        if not self.records:
            return 0.0
        return 100.0 * sum(r.success for r in self.records) / len(self.records)

    def to_json_dict(self) -> dict:
        return {
            "class_count": self.class_count,
            "cells": self.cells,
            "attacked": self.attacked,
            "overall_success_rate": self.overall_success_rate,
            "warnings": self.warnings,
        }


def run_targeted_matrix(
    dataset: LabeledDataset,
    oracle: Oracle,
    cfg: AttackConfig,
    per_pair_quota: int,
    out_dir=None,
    workers: int = 1,
) -> TargetedMatrix:
    """Per ordered class pair (s, t), attack ``per_pair_quota`` correctly
    classified images of class s with target t."""
    if dataset.class_count < 2:
        raise ContractViolationError("targeted matrix needs >= 2 classes")
    if per_pair_quota < 1:
        raise ContractViolationError("per_pair_quota must be positive")
    cfg.validate()
    selection = select_correctly_classified(dataset, oracle, per_pair_quota)
    by_class = selection.dataset.by_class()
    classes = dataset.class_count
    warnings = list(selection.warnings)
    for c in range(classes):
        if 0 < len(by_class[c]) < per_pair_quota:
            warnings.append(
                f"class {c}: only {len(by_class[c])} of {per_pair_quota} items available"
            )

    jobs = []
    for s in range(classes):
        for t in range(classes):
            if t == s:
                continue
            for j, item in enumerate(by_class[s]):
                attack_index = (s * classes + t) * per_pair_quota + j
                jobs.append((attack_index, s, t, item))

    def worker(job):
        attack_index, s, t, item = job
        image = item.load()
        outcome = run_attack(
            image,
            AttackGoal(label=s, target=t),
            oracle,
            cfg,
            rng_from_seed(mix_seed(cfg.seed, attack_index)),
        )
        return MatrixRecord(
            source=s,
            target=t,
            id=item.id,
            success=outcome.success,
            queries=outcome.queries,
            l0=outcome.l0,
            final_loss=outcome.final_loss,
        )

    records = _run_jobs(jobs, worker, workers, oracle.concurrent_safe)

    cells: list[list[float | None]] = [[None] * classes for _ in range(classes)]
    attacked = [[0] * classes for _ in range(classes)]
    wins = [[0] * classes for _ in range(classes)]
    for rec in records:
        attacked[rec.source][rec.target] += 1
        wins[rec.source][rec.target] += int(rec.success)
    for s in range(classes):
        for t in range(classes):
            if s != t and attacked[s][t] > 0:
                cells[s][t] = 100.0 * wins[s][t] / attacked[s][t]

    matrix = TargetedMatrix(
        class_count=classes,
        cells=cells,
        attacked=attacked,
        records=list(records),
        warnings=warnings,
    )
    if out_dir is not None:
        persist_matrix(matrix, out_dir)
    return matrix


def persist_matrix(matrix: TargetedMatrix, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "matrix.json", "w") as fh:
        json.dump(matrix.to_json_dict(), fh, indent=2)
        fh.write("\n")
    with open(out / "matrix_records.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "target", "id", "success", "queries", "l0", "final_loss"])
        for rec in matrix.records:
            writer.writerow(
                [
                    rec.source,
                    rec.target,
                    rec.id,
                    "true" if rec.success else "false",
                    rec.queries,
                    rec.l0,
                    repr(rec.final_loss),
                ]
            )
