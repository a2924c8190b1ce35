# src/experiments/sweep.py
"""
Layer x codebook-size ablation: one k-means tokenizer and one captioner per grid cell,
scored on the test split. Cells run on a thread pool; the report is assembled in grid order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from config.manager import ConfigManager
from corpus import Corpus, FrozenEncoder
from metrics import write_csv
from utils.artifacts import atomic_write
from utils.errors import ConfigError
from utils.progress import ProgressTracker, worker_count
from .pipeline import TokenizerSettings, caption_system, captioner_config, fit_tokenizer

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("layer", "K", "cider_d", "n_words")
SVG_HASH_SALT = "toktide-sweep"


@dataclass(frozen=True)
class SweepCell:
    layer: int
    K: int


def sweep_grid(layers: Sequence[int], clusters: Sequence[int], n_encoder_layers: int) -> List[SweepCell]:
    if not layers or not clusters:
        raise ConfigError("sweep grid is empty: give at least one layer and one cluster count")
    bad = [l for l in layers if not 1 <= int(l) <= n_encoder_layers]
    if bad:
        raise ConfigError(f"sweep layers {bad} outside [1, {n_encoder_layers}]")
    if any(int(k) < 1 for k in clusters):
        raise ConfigError(f"sweep cluster counts must be positive, got {list(clusters)}")
    return [SweepCell(int(l), int(k)) for l, k in product(sorted(set(layers)), sorted(set(clusters)))]


def run_cell(cell: SweepCell, corpus: Corpus, encoder: FrozenEncoder, cfg: ConfigManager) -> Dict:
    seed = cfg.get_int("seed")
    settings = TokenizerSettings(kind="kmeans", K=cell.K, layer=cell.layer, seed=seed)
    bundle = fit_tokenizer(settings, corpus, encoder, cfg).bundle
    run = caption_system("tokens", corpus, encoder, captioner_config(cfg, seed=seed, kind="encdec"), bundle=bundle)
    return {"layer": cell.layer, "K": cell.K, **run.scores}


def write_heatmap(path, rows: Sequence[Dict], metric: str = "cider_d") -> None:
    """Deterministic SVG: fixed hash salt and no date metadata."""
    layers = sorted({r["layer"] for r in rows})
    clusters = sorted({r["K"] for r in rows})
    grid = np.full((len(layers), len(clusters)), np.nan)
    for r in rows:
        grid[layers.index(r["layer"]), clusters.index(r["K"])] = r[metric]

    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(clusters), 1.2 + 0.8 * len(layers)))
    image = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(clusters)), [str(k) for k in clusters])
    ax.set_yticks(range(len(layers)), [str(l) for l in layers])
    ax.set_xlabel("K")
    ax.set_ylabel("encoder layer")
    for i in range(len(layers)):
        for j in range(len(clusters)):
            ax.text(j, i, f"{grid[i, j]:.3f}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(image, ax=ax, label=metric)
    fig.tight_layout()
    with atomic_write(path, "wb") as f:
        fig.savefig(f, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote sweep heatmap {path}")


def run_sweep(cfg: ConfigManager, corpus: Corpus, encoder: FrozenEncoder, layers: Sequence[int],
              clusters: Sequence[int], out_dir, heatmap: bool = True) -> List[Dict]:
    cells = sweep_grid(layers, clusters, encoder.n_layers)
    out_dir = Path(out_dir)
    # fill the feature cache up front so worker threads only read it
    for split in ("train", "val", "test"):
        if corpus.ids(split):
            corpus.all_layer_features(split, encoder)

    tracker = ProgressTracker(len(cells), label="sweep cells")
    logger.info(f"Sweeping {len(cells)} cells: layers={sorted({c.layer for c in cells})} "
                f"K={sorted({c.K for c in cells})}")

    def work(cell: SweepCell) -> Dict:
        try:
            row = run_cell(cell, corpus, encoder, cfg)
        except Exception:
            tracker.update("failed")
            raise
        tracker.update()
        return row

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(cells))) as pool:
        rows = list(pool.map(work, cells))
    summary = tracker.get_summary()
    logger.info(f"Sweep cells finished: {summary['done']}/{summary['total']} in {summary['elapsed_seconds']:.1f}s")

    write_csv(out_dir / "sweep.csv", rows, SWEEP_COLUMNS)
    if heatmap:
        write_heatmap(out_dir / "heatmap.svg", rows)
    return rows
