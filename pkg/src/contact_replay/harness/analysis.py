"""Multi-seed aggregation, parameter sweeps, plots and buffer inspection."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..core import ReplayBuffer
from ..env import ConfigError
from ..prioritizers import PrioritizerKind, SigmoidParams, entropy, episode_probabilities
from .config import VALID_KEYS, RunConfig, apply_overrides, format_value
from .training import train

AGGREGATE_COLUMNS = ("label", "epoch", "median", "q25", "q75", "n_seeds")


def read_metrics(path) -> dict[int, dict[int, float]]:
    """``{seed: {epoch: success_rate}}`` from a metrics CSV."""
    runs: dict[int, dict[int, float]] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            runs.setdefault(int(row["seed"]), {})[int(row["epoch"])] = float(row["success_rate"])
    return runs


def success_matrix(path) -> tuple[np.ndarray, np.ndarray]:
    """Epoch axis and a (seeds, epochs) success-rate matrix.

    Raises ValueError when the seeds in the file disagree on the epochs.
    """
    runs = read_metrics(path)
    axes = {tuple(sorted(curve)) for curve in runs.values()}
    if len(axes) > 1:
        raise ValueError(f"{path}: seeds cover different epochs")
    epochs = np.array(axes.pop() if axes else (), dtype=int)
    matrix = np.array([[runs[s][e] for e in epochs] for s in sorted(runs)], dtype=float)
    return epochs, matrix.reshape(len(runs), len(epochs))


def median_iqr(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column median, 25th and 75th percentile (linear interpolation)."""
    if matrix.shape[0] == 0:
        empty = np.zeros(matrix.shape[1])
        return empty, empty, empty
    q25, med, q75 = np.percentile(matrix, [25, 50, 75], axis=0)
    return med, q25, q75


def first_crossing(curve, threshold: float) -> int | None:
    """Index of the first entry >= threshold, or None."""
    hits = np.flatnonzero(np.asarray(curve) >= threshold)
    return int(hits[0]) if hits.size else None


def aggregate(paths_by_label: dict[str, Path], out_path) -> Path:
    """Write median/IQR per epoch for each labelled metrics file."""
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for label, path in paths_by_label.items():
            epochs, matrix = success_matrix(path)
            med, q25, q75 = median_iqr(matrix)
            for i, epoch in enumerate(epochs):
                writer.writerow([label, int(epoch), repr(float(med[i])), repr(float(q25[i])),
                                 repr(float(q75[i])), matrix.shape[0]])
    return out_path


def sweep(config: RunConfig, parameter: str, values) -> Path:
    """Train once per value (all seeds each) and aggregate into ``sweep.csv``."""
    if parameter not in VALID_KEYS:
        raise ConfigError(f"unknown config key {parameter!r}; valid keys: {', '.join(VALID_KEYS)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    root = Path(config.output_dir)
    paths = {}
    for value in values:
        label = f"{parameter}={format_value(value) if not isinstance(value, str) else value}"
        run_dir = root / label.replace("/", "_")
        cfg = apply_overrides(config, {parameter: value, "run.output_dir": str(run_dir)})
        paths[label] = train(cfg)
    return aggregate(paths, root / "sweep.csv")


def temperature_entropies(buffer: ReplayBuffer, temperatures, k: float = 100.0) -> dict:
    """Entropy of the CEBP episode distribution for each sigmoid temperature."""
    out = {}
    for T in temperatures:
        kind = PrioritizerKind("cebp", SigmoidParams(k=k, T=float(T)))
        out[float(T)] = entropy(episode_probabilities(buffer, kind))
    return out


def inspect_buffer(buffer: ReplayBuffer, kinds) -> list[dict]:
    """One row per stored episode with its energy, priority and per-kind probabilities."""
    probs = {kind.variant: episode_probabilities(buffer, kind) for kind in kinds}
    energies = buffer.contact_energies
    priorities = buffer.priorities
    rows = []
    for i, eid in enumerate(buffer.episode_ids):
        row = {"index": i, "episode_id": int(eid), "contact_energy": float(energies[i, -1]),
               "priority": float(priorities[i])}
        for name, p in probs.items():
            row[f"p_{name}"] = float(p[i])
        rows.append(row)
    return rows


def plot(paths_by_label: dict[str, Path], out_path, title: str | None = None) -> Path:
    """Median success line plus shaded IQR band per method, saved as SVG.

    All inputs must share one epoch axis.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not paths_by_label:
        raise ValueError("plot needs at least one metrics file")
    series = {}
    axis = None
    for label, path in paths_by_label.items():
        epochs, matrix = success_matrix(path)
        if axis is not None and not np.array_equal(axis, epochs):
            raise ValueError(f"{path}: epochs differ from the other metrics files")
        axis = epochs
        series[label] = median_iqr(matrix)

    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    styles = ("-", "--", "-.", ":")
    for i, (label, (med, q25, q75)) in enumerate(series.items()):
        line, = ax.plot(axis, med, linestyle=styles[i % len(styles)], label=label)
        ax.fill_between(axis, q25, q75, color=line.get_color(), alpha=0.25, linewidth=0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def label_for(path) -> str:
    path = Path(path)
    return path.parent.name if path.name == "metrics.csv" else path.stem
