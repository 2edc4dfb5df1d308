"""Metric CSV emission and latent tensor export."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from ..numerics.checkpoint import save_checkpoint

METRICS_HEADER = ["scenario_id", "metric", "value"]


def write_metrics_csv(path, rows: Iterable[tuple[str, str, float]]) -> None:
    """Write (scenario id, metric name, value) rows with a header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for scenario_id, metric, value in rows:
            writer.writerow([scenario_id, metric, f"{float(value):.9g}"])


def read_metrics_csv(path) -> list[tuple[str, str, float]]:
    """Read rows written by write_metrics_csv."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        return [(sid, metric, float(value)) for sid, metric, value in reader]


def export_latents(path, latents: dict[str, np.ndarray]) -> None:
    """Export named latent arrays in the checkpoint tensor format."""
    save_checkpoint(path, {k: np.asarray(v) for k, v in latents.items()})
