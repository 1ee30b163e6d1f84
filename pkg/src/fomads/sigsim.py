"""Parametric synthetic generator of single-sensor VPQ windows.

Each window holds ``window_len`` samples of bus voltage V, active power P
and reactive power Q around nominal operating values. The normal model is
a slowly drifting load level plus a small 100 Hz envelope ripple and a
white noise floor. Fault windows share the normal model up to the window
midpoint; from the fault onset a class-specific signature is superimposed:
a switch-indexed ripple on V (frequency and phase keyed by the switch) and
inverter-indexed droop steps on P and Q.

All randomness flows through counter-based Philox streams keyed on
``(config seed, window seed)``, so generating windows in any order or in
parallel yields bit-identical results.

The load/solar drift statistics (``load_jitter``, ``noise_floor`` and the
drift band) are this generator's own invention; only the nominal scales
and the 25-class layout follow the reference scenario.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .kvconfig import coerce, read_kv_file, write_kv_file
from .labels import N_INVERTERS, N_SWITCHES, ClassLabel

ATTACK_KINDS = ("none", "bias", "noise", "replacement", "replay")

DATASET_HEADER = ["window_id", "sample_idx", "V", "P", "Q", "class_id", "attack_kind"]


@dataclass(frozen=True)
class Signature:
    """Post-fault superposition parameters for one (inverter, switch) pair."""

    ripple_freq_hz: float
    ripple_amp_rel: float
    phase_rad: float
    droop_p_rel: float
    droop_q_rel: float


@dataclass(frozen=True)
class ScenarioConfig:
    """Shapes and scales of the synthetic waveform model.

    The defaults keep every fault signature at least an order of magnitude
    above the jitter/noise floor (ripple >= 5% and droop >= 4% of scale vs
    a 1% load jitter and 0.4% noise), so the 25 classes are separable by
    construction.
    """

    base_voltage: float = 311.0
    base_p: float = 5000.0
    base_q: float = 2000.0
    load_jitter: float = 0.01
    noise_floor: float = 0.004
    env_ripple: float = 0.005
    env_freq_hz: float = 100.0
    ripple_freq_base_hz: float = 80.0
    ripple_freq_step_hz: float = 40.0
    ripple_amp_base: float = 0.05
    ripple_amp_step: float = 0.0125
    droop_p_base: float = 0.05
    droop_p_step: float = 0.04
    droop_q_base: float = 0.04
    droop_q_step: float = 0.03
    window_len: int = 400
    sample_rate: float = 2000.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.window_len < 4 or self.window_len % 2:
            raise ConfigError(f"window_len must be an even integer >= 4, got {self.window_len}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be > 0")
        for name in ("base_voltage", "base_p", "base_q"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("load_jitter", "noise_floor", "env_ripple"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        nyquist = self.sample_rate / 2.0
        top = self.ripple_freq_base_hz + self.ripple_freq_step_hz * (N_SWITCHES - 1)
        if top >= nyquist:
            raise ConfigError(f"fault ripple at {top} Hz exceeds the Nyquist rate {nyquist} Hz")

    @property
    def fault_onset(self) -> int:
        return self.window_len // 2

    def signature(self, inverter: int, switch: int) -> Signature:
        """Signature for one fault pair; distinct for every pair.

        Ripple frequency and phase are keyed by the switch index, ripple
        amplitude and both droops by the inverter index, so any two pairs
        differ in at least one parameter.
        """
        if not (1 <= inverter <= N_INVERTERS and 1 <= switch <= N_SWITCHES):
            raise ConfigError(f"fault pair ({inverter}, {switch}) out of range")
        return Signature(
            ripple_freq_hz=self.ripple_freq_base_hz + self.ripple_freq_step_hz * (switch - 1),
            ripple_amp_rel=self.ripple_amp_base + self.ripple_amp_step * (inverter - 1),
            phase_rad=2.0 * np.pi * (switch - 1) / N_SWITCHES,
            droop_p_rel=self.droop_p_base + self.droop_p_step * (inverter - 1),
            droop_q_rel=self.droop_q_base + self.droop_q_step * (inverter - 1),
        )

    def to_file(self, path: str) -> None:
        write_kv_file(path, {k: getattr(self, k) for k in self.__dataclass_fields__})

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        raw = read_kv_file(path)
        kwargs = {}
        for name, fld in cls.__dataclass_fields__.items():
            kind = int if fld.type == "int" else float
            kwargs[name] = coerce(raw, name, kind, fld.default)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class Waveform:
    """One fixed-length window of (V, P, Q) samples with its ground truth.

    ``samples`` has shape (window_len, 3) with columns V, P, Q. The
    ``attack_kind`` annotation is "none" at generation time; injectors
    stamp their own kind. ``window_id`` is the position within the dataset
    the window was generated into (-1 for standalone windows).
    """

    samples: np.ndarray
    label: ClassLabel
    seed: int
    sample_rate: float = 2000.0
    attack_kind: str = "none"
    window_id: int = -1

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise DataError(f"window {self.window_id}: samples must have shape (L, 3)")

    @property
    def v(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def p(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def q(self) -> np.ndarray:
        return self.samples[:, 2]

    def copy(self) -> "Waveform":
        return Waveform(
            self.samples.copy(), self.label, self.seed, self.sample_rate,
            self.attack_kind, self.window_id,
        )


def _stream(config_seed: int, window_seed: int) -> np.random.Generator:
    """Independent per-window stream from a counter-based generator."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((config_seed, window_seed))))


def _channel_drift(rng: np.random.Generator, t: np.ndarray, jitter: float) -> np.ndarray:
    """Slow relative load drift: clipped offset plus a 1-5 Hz sway.

    The offset is clipped at 2.5 sigma and the sway amplitude is half the
    jitter, so the window mean stays within 3*jitter of nominal for every
    seed.
    """
    offset = float(np.clip(rng.normal(0.0, 0.5 * jitter), -1.25 * jitter, 1.25 * jitter))
    sway_freq = rng.uniform(1.0, 5.0)
    sway_phase = rng.uniform(0.0, 2.0 * np.pi)
    return offset + 0.5 * jitter * np.sin(2.0 * np.pi * sway_freq * t + sway_phase)


def _normal_samples(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.window_len
    t = np.arange(n) / config.sample_rate
    env_phase = rng.uniform(0.0, 2.0 * np.pi)
    env = config.env_ripple * np.sin(2.0 * np.pi * config.env_freq_hz * t + env_phase)

    out = np.empty((n, 3))
    for col, base in enumerate((config.base_voltage, config.base_p, config.base_q)):
        drift = _channel_drift(rng, t, config.load_jitter)
        carrier = env if col == 0 else 0.0
        noise = rng.normal(0.0, config.noise_floor * base, size=n)
        out[:, col] = base * (1.0 + carrier + drift) + noise
    return out


def generate_normal(config: ScenarioConfig, seed: int) -> Waveform:
    """One fault-free window, deterministic in (config.seed, seed)."""
    rng = _stream(config.seed, seed)
    samples = _normal_samples(config, rng)
    return Waveform(samples, ClassLabel.normal(), seed, config.sample_rate)


def generate_fault(config: ScenarioConfig, inverter: int, switch: int, seed: int) -> Waveform:
    """One fault window: normal prefix, signature superimposed from midpoint.

    The pre-onset samples equal :func:`generate_normal` with the same seed
    bit for bit, because the fault is an additive overlay on the same
    stream.
    """
    sig = config.signature(inverter, switch)
    rng = _stream(config.seed, seed)
    samples = _normal_samples(config, rng)

    onset = config.fault_onset
    tau = np.arange(config.window_len - onset) / config.sample_rate
    ripple = config.base_voltage * sig.ripple_amp_rel * np.sin(
        2.0 * np.pi * sig.ripple_freq_hz * tau + sig.phase_rad
    )
    samples[onset:, 0] += ripple
    samples[onset:, 1] -= config.base_p * sig.droop_p_rel
    samples[onset:, 2] -= config.base_q * sig.droop_q_rel
    return Waveform(samples, ClassLabel.fault(inverter, switch), seed, config.sample_rate)


def generate_dataset(
    config: ScenarioConfig,
    n_normal: int = 800,
    n_per_fault: int = 200,
    seed: int | None = None,
) -> list[Waveform]:
    """Deterministic dataset: normal block first, then faults by class id.

    Every window gets its own derived seed, so the result is independent
    of generation order. Total size is ``n_normal + 24 * n_per_fault``.
    """
    if n_normal < 0 or n_per_fault < 0:
        raise ConfigError("window counts must be >= 0")
    if seed is not None and seed != config.seed:
        config = replace(config, seed=seed)

    windows: list[Waveform] = []
    wid = 0
    for _ in range(n_normal):
        w = generate_normal(config, seed=wid)
        w.window_id = wid
        windows.append(w)
        wid += 1
    for inverter in range(1, N_INVERTERS + 1):
        for switch in range(1, N_SWITCHES + 1):
            for _ in range(n_per_fault):
                w = generate_fault(config, inverter, switch, seed=wid)
                w.window_id = wid
                windows.append(w)
                wid += 1
    return windows


def save_dataset_csv(path: str, windows: list[Waveform]) -> None:
    """Write windows in the flat dataset format, 400 rows per window."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for w in windows:
            cid = w.label.class_id
            for idx in range(w.samples.shape[0]):
                v, p, q = w.samples[idx]
                writer.writerow([w.window_id, idx, repr(v), repr(p), repr(q), cid, w.attack_kind])


def load_dataset_csv(path: str, sample_rate: float = 2000.0) -> list[Waveform]:
    """Read a dataset file back into windows, preserving window order."""
    by_window: dict[int, list[tuple[int, float, float, float]]] = {}
    meta: dict[int, tuple[int, str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise DataError(f"{path}: unexpected dataset header {header}")
        for row in reader:
            try:
                wid, idx = int(row[0]), int(row[1])
                v, p, q = float(row[2]), float(row[3]), float(row[4])
                cid, kind = int(row[5]), row[6]
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: malformed row {row}") from exc
            by_window.setdefault(wid, []).append((idx, v, p, q))
            meta[wid] = (cid, kind)
    windows = []
    for wid in sorted(by_window):
        rows = sorted(by_window[wid])
        samples = np.array([(v, p, q) for _, v, p, q in rows])
        cid, kind = meta[wid]
        w = Waveform(
            samples, ClassLabel.from_class_id(cid), seed=wid,
            sample_rate=sample_rate, attack_kind=kind, window_id=wid,
        )
        windows.append(w)
    return windows
