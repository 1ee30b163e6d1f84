"""Dual fractional-order feature extraction and normalization.

A window's feature vector is built from six derivative series - the
Caputo and GL derivatives of each of V, P and Q - each aggregated with
five statistics (mean, std, max abs, RMS, normalized argmax of abs), in
this fixed layout::

    (CaputoV, CaputoP, CaputoQ, GLV, GLP, GLQ) x (mean, std, maxabs, rms, argmax/L)

giving 30 dimensions under schema 1. With ``include_fractional=False``
the layout degrades to the same five statistics of the three raw channels
(15 dimensions, schema 2), which supports the no-fractional-features
ablation.

Both the extractor and the normalizer follow the scikit-learn estimator
protocol (``fit``/``transform``/``get_params``) so the pipeline composes
with the wider ecosystem.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import fracdiff
from .errors import ConfigError, DataError
from .sigsim import Waveform

SCHEMA_FRACTIONAL = 1
SCHEMA_RAW = 2

STAT_NAMES = ("mean", "std", "maxabs", "rms", "argmax_frac")
SERIES_FRACTIONAL = ("caputo_v", "caputo_p", "caputo_q", "gl_v", "gl_p", "gl_q")
SERIES_RAW = ("raw_v", "raw_p", "raw_q")

STD_FLOOR = 1e-9


def feature_dim(schema_id: int) -> int:
    if schema_id == SCHEMA_FRACTIONAL:
        return len(SERIES_FRACTIONAL) * len(STAT_NAMES)
    if schema_id == SCHEMA_RAW:
        return len(SERIES_RAW) * len(STAT_NAMES)
    raise ConfigError(f"unknown feature schema {schema_id}")


def feature_names(schema_id: int) -> list[str]:
    series = SERIES_FRACTIONAL if schema_id == SCHEMA_FRACTIONAL else SERIES_RAW
    return [f"{s}_{stat}" for s in series for stat in STAT_NAMES]


def _aggregate(series: np.ndarray, settle: int = 0) -> np.ndarray:
    """Five temporal statistics of one derivative series.

    ``settle`` drops the leading samples where the short-memory kernel has
    not yet seen a full history; that warm-up ramp is a truncation
    artifact and would otherwise pin the max of every window to index 0.
    The argmax is reported relative to the settled region, normalized by
    the full series length, so an all-zero series maps to 0.
    """
    length = series.size
    region = series[settle:]
    absx = np.abs(region)
    return np.array([
        region.mean(),
        region.std(),
        absx.max(),
        np.sqrt(np.mean(region * region)),
        float(np.argmax(absx)) / length,
    ])


def extract_features(
    w: Waveform,
    alpha: float = fracdiff.DEFAULT_CAPUTO_ORDER,
    beta: float = fracdiff.DEFAULT_GL_ORDER,
    kernel_len: int = fracdiff.DEFAULT_KERNEL_LEN,
    include_fractional: bool = True,
) -> np.ndarray:
    """Feature vector of one window; deterministic in its inputs.

    The derivative step is the window's own sampling interval. Non-finite
    samples are rejected up front so a bad window is named, not silently
    propagated into the model.
    """
    if not np.all(np.isfinite(w.samples)):
        raise DataError(f"window {w.window_id}: non-finite samples")
    step = 1.0 / w.sample_rate
    if include_fractional:
        series = [
            fracdiff.caputo_derivative(w.samples[:, c], alpha, kernel_len, step)
            for c in range(3)
        ] + [
            fracdiff.gl_derivative(w.samples[:, c], beta, kernel_len, step)
            for c in range(3)
        ]
        settle = kernel_len
    else:
        series = [w.samples[:, c] for c in range(3)]
        settle = 0
    return np.concatenate([_aggregate(s, settle) for s in series])


class FractionalFeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from waveform windows to feature matrices.

    ``fit`` is a no-op (the extraction has no learned state); it exists for
    pipeline compatibility.
    """

    def __init__(
        self,
        alpha: float = fracdiff.DEFAULT_CAPUTO_ORDER,
        beta: float = fracdiff.DEFAULT_GL_ORDER,
        kernel_len: int = fracdiff.DEFAULT_KERNEL_LEN,
        include_fractional: bool = True,
    ):
        self.alpha = alpha
        self.beta = beta
        self.kernel_len = kernel_len
        self.include_fractional = include_fractional

    @property
    def schema_id(self) -> int:
        return SCHEMA_FRACTIONAL if self.include_fractional else SCHEMA_RAW

    def fit(self, X, y=None):
        return self

    def transform(self, X: list[Waveform]) -> np.ndarray:
        return np.array([
            extract_features(w, self.alpha, self.beta, self.kernel_len,
                             self.include_fractional)
            for w in X
        ])


class FeatureNormalizer(BaseEstimator, TransformerMixin):
    """Per-dimension standardization with a floored std.

    Uses the population convention (ddof=0). Dimensions that are constant
    on the fit data get their std floored at 1e-9, so their normalized
    value is ~0 rather than inf. Fitted on the clean training split only;
    attack-induced shifts then stay visible as out-of-distribution values.
    """

    def __init__(self, schema_id: int = SCHEMA_FRACTIONAL):
        self.schema_id = schema_id

    def fit(self, X: np.ndarray, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ConfigError("normalizer needs at least two feature vectors")
        if X.shape[1] != feature_dim(self.schema_id):
            raise ConfigError(
                f"schema {self.schema_id} expects {feature_dim(self.schema_id)} "
                f"dimensions, got {X.shape[1]}"
            )
        self.mean_ = X.mean(axis=0)
        self.std_ = np.maximum(X.std(axis=0), STD_FLOOR)
        return self

    def _check_fitted_and_schema(self, X: np.ndarray) -> np.ndarray:
        if not hasattr(self, "mean_"):
            raise ConfigError("normalizer is not fitted")
        X = np.asarray(X, dtype=float)
        cols = X.shape[-1]
        if cols != self.mean_.size:
            raise ConfigError(f"feature schema mismatch: expected {self.mean_.size} dims, got {cols}")
        return X

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = self._check_fitted_and_schema(X)
        return (X - self.mean_) / self.std_

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        X = self._check_fitted_and_schema(X)
        return X * self.std_ + self.mean_

    def to_file(self, path: str) -> None:
        """Persist as text: a schema_id line, then dim,mean,std rows."""
        if not hasattr(self, "mean_"):
            raise ConfigError("normalizer is not fitted")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.schema_id}\n")
            for dim, (m, s) in enumerate(zip(self.mean_, self.std_)):
                fh.write(f"{dim},{format(m, '.17g')},{format(s, '.17g')}\n")

    @classmethod
    def from_file(cls, path: str) -> "FeatureNormalizer":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        try:
            schema_id = int(lines[0])
            rows = [ln.split(",") for ln in lines[1:]]
            means = np.array([float(r[1]) for r in rows])
            stds = np.array([float(r[2]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: malformed normalizer file") from exc
        if means.size != feature_dim(schema_id):
            raise DataError(f"{path}: {means.size} rows do not match schema {schema_id}")
        out = cls(schema_id=schema_id)
        out.mean_ = means
        out.std_ = stds
        return out


FEATURE_CSV_KIND_COL = "attack_kind"


def save_features_csv(path: str, X: np.ndarray, class_ids: np.ndarray,
                      attack_kinds: list[str], window_ids: np.ndarray) -> None:
    """Write a feature matrix as window_id,f_0..f_{D-1},class_id,attack_kind."""
    d = X.shape[1]
    header = ["window_id"] + [f"f_{j}" for j in range(d)] + ["class_id", FEATURE_CSV_KIND_COL]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for wid, row, cid, kind in zip(window_ids, X, class_ids, attack_kinds):
            vals = ",".join(repr(v) for v in row)
            fh.write(f"{wid},{vals},{cid},{kind}\n")


def load_features_csv(path: str) -> tuple[np.ndarray, np.ndarray, list[str], np.ndarray]:
    """Read back (X, class_ids, attack_kinds, window_ids)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "window_id" or header[-1] != FEATURE_CSV_KIND_COL:
            raise DataError(f"{path}: unexpected feature header")
        d = len(header) - 3
        wids, rows, cids, kinds = [], [], [], []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != d + 3:
                raise DataError(f"{path}: row with {len(parts)} columns, expected {d + 3}")
            wids.append(int(parts[0]))
            rows.append([float(v) for v in parts[1 : 1 + d]])
            cids.append(int(parts[-2]))
            kinds.append(parts[-1])
    return (np.array(rows), np.array(cids, dtype=int), kinds, np.array(wids, dtype=int))
