"""Multi-seed ablation and prompt-comparison experiments."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import Dataset, TEST
from .errors import ConfigError
from .metrics import MetricsReport
from .trainer import evaluate, train

ABLATION_SETTINGS = ("full", "no_sbma", "no_map", "no_tcl")
COMPARISON_MODES = ("modality_aware", "handcraft_1", "handcraft_2", "mask")

METRIC_NAMES = ("acc", "wf1", "wp", "r")


@dataclass
class ExperimentRow:
    """Mean and standard deviation of each metric over the seeds."""

    setting: str
    seeds: list
    mean: dict
    std: dict

    def flat(self) -> dict:
        out = {"setting": self.setting}
        out.update({m: self.mean[m] for m in METRIC_NAMES})
        out.update({f"{m}_std": self.std[m] for m in METRIC_NAMES})
        return out


def _with(cfg: TrainConfig, **changes) -> TrainConfig:
    out = dataclasses.replace(cfg, **changes)
    out.validate()
    return out


def ablation_config(cfg: TrainConfig, setting: str) -> TrainConfig:
    if setting == "full":
        return _with(cfg, sbma_on=True, map_on=True, tcl_on=True)
    if setting == "no_sbma":
        return _with(cfg, sbma_on=False, map_on=True, tcl_on=True)
    if setting == "no_map":
        return _with(cfg, sbma_on=True, map_on=False, tcl_on=True)
    if setting == "no_tcl":
        return _with(cfg, sbma_on=True, map_on=True, tcl_on=False)
    raise ConfigError(f"unknown ablation setting {setting!r}")


def _run_one(cfg: TrainConfig, dataset: Dataset) -> MetricsReport:
    checkpoint, _ = train(cfg, dataset)
    return evaluate(checkpoint, dataset.splits[TEST])


def _aggregate(setting: str, seeds: list[int], reports: list[MetricsReport]) -> ExperimentRow:
    values = {m: np.array([getattr(r, m) for r in reports]) for m in METRIC_NAMES}
    return ExperimentRow(
        setting=setting,
        seeds=list(seeds),
        mean={m: float(values[m].mean()) for m in METRIC_NAMES},
        std={m: float(values[m].std()) for m in METRIC_NAMES},
    )


def ablate(cfg: TrainConfig, dataset: Dataset, seeds: list[int],
           ) -> list[ExperimentRow]:
    """Train/evaluate the full model and the three module ablations."""
    rows = []
    for setting in ABLATION_SETTINGS:
        reports = [_run_one(_with(ablation_config(cfg, setting), seed=s), dataset)
                   for s in seeds]
        rows.append(_aggregate(setting, seeds, reports))
    return rows


def compare_prompts(cfg: TrainConfig, dataset: Dataset, seeds: list[int],
                    ) -> list[ExperimentRow]:
    """Identical pipelines differing only in prompt_mode."""
    rows = []
    for mode in COMPARISON_MODES:
        run_cfg = _with(cfg, prompt_mode=mode, map_on=True)
        reports = [_run_one(_with(run_cfg, seed=s), dataset) for s in seeds]
        rows.append(_aggregate(mode, seeds, reports))
    return rows


CSV_COLUMNS = ["setting"] + list(METRIC_NAMES) + [f"{m}_std" for m in METRIC_NAMES]


def write_rows_csv(rows: list[ExperimentRow], path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                             for k, v in row.flat().items()})
    return path


def read_rows_csv(path) -> list[dict]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ConfigError(f"{path}: unexpected CSV columns {reader.fieldnames}")
        out = []
        for rec in reader:
            parsed = {"setting": rec["setting"]}
            parsed.update({k: float(rec[k]) for k in CSV_COLUMNS[1:]})
            out.append(parsed)
    if not out:
        raise ConfigError(f"{path}: no data rows")
    return out
