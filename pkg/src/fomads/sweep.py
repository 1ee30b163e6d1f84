"""Joint sensitivity sweep over the Caputo order and the window length.

Each grid cell regenerates a small dataset at that window length (longer
windows cannot be cut from shorter ones), extracts features at that
Caputo order, trains a reduced attack-free hierarchical classifier and
scores its held-out accuracy. Cells use derived seeds, so the grid is
independent of evaluation order and may be computed in parallel.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import ConfigError
from .model import HierarchicalClassifier
from .pmrat import _derive_int, stratified_split
from .features import FeatureNormalizer, FractionalFeatureExtractor
from .sigsim import ScenarioConfig, generate_dataset

DEFAULT_KERNEL_LEN = 10


def run_cell(alpha: float, window_len: int, beta: float, n_normal: int,
             n_per_fault: int, epochs: int, seed: int,
             scenario: ScenarioConfig | None = None,
             kernel_len: int = DEFAULT_KERNEL_LEN) -> float:
    """Validation accuracy of one (alpha, L) cell."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if window_len < 2 * kernel_len:
        raise ConfigError(
            f"window length {window_len} is below the {2 * kernel_len}-sample "
            "support of the derivative kernels"
        )
    base = scenario or ScenarioConfig()
    config = replace(base, window_len=window_len, seed=_derive_int(seed, window_len))
    windows = generate_dataset(config, n_normal, n_per_fault)

    extractor = FractionalFeatureExtractor(alpha=alpha, beta=beta, kernel_len=kernel_len)
    feats = extractor.transform(windows)
    y = np.array([w.label.class_id for w in windows])
    cell_seed = _derive_int(seed, int(round(alpha * 1000)), window_len)
    train_idx, test_idx = stratified_split(y, 0.2, cell_seed)

    normalizer = FeatureNormalizer(extractor.schema_id).fit(feats[train_idx])
    x_train = normalizer.transform(feats[train_idx])
    x_test = normalizer.transform(feats[test_idx])

    clf = HierarchicalClassifier(epochs=epochs, seed=cell_seed)
    clf.fit(x_train, y[train_idx])
    return float(np.mean(clf.predict(x_test) == y[test_idx]))


def run_sweep(alphas: list[float], window_lens: list[int], beta: float = 0.3,
              n_normal: int = 64, n_per_fault: int = 16, epochs: int = 12,
              seed: int = 0,
              scenario: ScenarioConfig | None = None) -> list[tuple[float, int, float]]:
    """Full grid; returns (alpha, L, val_acc) rows in grid order."""
    if not alphas or not window_lens:
        raise ConfigError("sweep grid must be non-empty")
    rows = []
    for alpha in alphas:
        for length in window_lens:
            acc = run_cell(alpha, length, beta, n_normal, n_per_fault,
                           epochs, seed, scenario)
            rows.append((alpha, length, acc))
    return rows


def rank_of_cell(rows: list[tuple[float, int, float]], alpha: float,
                 window_len: int) -> int:
    """1-based rank of one cell: 1 + number of strictly better cells."""
    target = next((r for r in rows if r[0] == alpha and r[1] == window_len), None)
    if target is None:
        raise ConfigError(f"cell ({alpha}, {window_len}) not in the sweep")
    return 1 + sum(1 for r in rows if r[2] > target[2])
