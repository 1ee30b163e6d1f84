"""Deterministic cyber-attack injection on VPQ windows.

Four attack families corrupt the raw waveform before feature extraction:

* bias: fixed offsets added to every sample of every channel,
* noise: zero-mean Gaussian noise on a contiguous segment,
* replacement: a contiguous segment overwritten with constants,
* replay: a pre-fault segment copied over a later segment, concealing
  (not curing) the fault, so the ground-truth label is preserved.

Injectors never mutate their input; they return an annotated copy. The
same (waveform, spec) pair always yields the same output.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .sigsim import Waveform

#: Relative difficulty of each attack family, used by the adaptive loss
#: weight. Replacement's 0.9 is pinned by the evaluation protocol; the
#: others are ordered by observed accuracy impact and config-overridable.
DEFAULT_DIFFICULTY = {
    "none": 0.0,
    "bias": 0.3,
    "noise": 0.6,
    "replacement": 0.9,
    "replay": 0.8,
}


@dataclass(frozen=True)
class AttackSpec:
    """Parameters of one attack instance.

    Only the fields of the matching ``kind`` are meaningful; the factory
    classmethods fill in the protocol defaults for a 400-sample window
    with fault onset at index 200.
    """

    kind: str
    dv: float = 0.0
    dp: float = 0.0
    dq: float = 0.0
    sigma_rel: float = 0.0
    value_mode: str = "zero"  # zero | hold-first | constant
    const: float = 0.0
    start: int = 0
    length: int = 0
    source_start: int = 0
    target_start: int = 0
    difficulty: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("bias", "noise", "replacement", "replay"):
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ConfigError(f"difficulty must lie in [0, 1], got {self.difficulty}")
        if self.length < 0:
            raise ConfigError("segment length must be >= 0")
        if self.value_mode not in ("zero", "hold-first", "constant"):
            raise ConfigError(f"unknown replacement mode {self.value_mode!r}")

    @classmethod
    def bias(cls, dv: float = 0.1, dp: float = 50.0, dq: float = 30.0,
             difficulty: float = 0.3, seed: int = 0) -> "AttackSpec":
        return cls("bias", dv=dv, dp=dp, dq=dq, difficulty=difficulty, seed=seed)

    @classmethod
    def noise(cls, sigma_rel: float = 0.05, start: int = 150, length: int = 200,
              difficulty: float = 0.6, seed: int = 0) -> "AttackSpec":
        return cls("noise", sigma_rel=sigma_rel, start=start, length=length,
                   difficulty=difficulty, seed=seed)

    @classmethod
    def replacement(cls, value_mode: str = "zero", const: float = 0.0,
                    start: int = 200, length: int = 100,
                    difficulty: float = 0.9, seed: int = 0) -> "AttackSpec":
        return cls("replacement", value_mode=value_mode, const=const, start=start,
                   length=length, difficulty=difficulty, seed=seed)

    @classmethod
    def replay(cls, source_start: int = 0, target_start: int = 200, length: int = 100,
               difficulty: float = 0.8, seed: int = 0) -> "AttackSpec":
        return cls("replay", source_start=source_start, target_start=target_start,
                   length=length, difficulty=difficulty, seed=seed)

    @classmethod
    def default_for(cls, kind: str, seed: int = 0) -> "AttackSpec":
        factory = {"bias": cls.bias, "noise": cls.noise,
                   "replacement": cls.replacement, "replay": cls.replay}
        if kind not in factory:
            raise ConfigError(f"unknown attack kind {kind!r}")
        return factory[kind](seed=seed)

    def with_seed(self, seed: int) -> "AttackSpec":
        return replace(self, seed=seed)


def _check_kind(spec: AttackSpec, expected: str) -> None:
    if spec.kind != expected:
        raise ConfigError(f"expected a {expected} spec, got kind {spec.kind!r}")


def _check_segment(w: Waveform, start: int, length: int) -> None:
    n = w.samples.shape[0]
    if start < 0 or start + length > n:
        raise ConfigError(f"segment [{start}, {start + length}) outside window of {n} samples")


def apply_bias(w: Waveform, spec: AttackSpec) -> Waveform:
    """Add fixed (dv, dp, dq) offsets to every sample."""
    _check_kind(spec, "bias")
    out = w.copy()
    out.samples[:, 0] += spec.dv
    out.samples[:, 1] += spec.dp
    out.samples[:, 2] += spec.dq
    out.attack_kind = "bias"
    return out


def apply_noise(w: Waveform, spec: AttackSpec) -> Waveform:
    """Inject zero-mean Gaussian noise on the declared segment only.

    Per-channel std is ``sigma_rel`` times the window's own mean absolute
    channel level, so the corruption scales with the signal.
    """
    _check_kind(spec, "noise")
    _check_segment(w, spec.start, spec.length)
    out = w.copy()
    if spec.length > 0 and spec.sigma_rel > 0.0:
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((spec.seed, w.seed, 1)))
        )
        scale = np.mean(np.abs(w.samples), axis=0)
        deltas = rng.normal(0.0, 1.0, size=(spec.length, 3)) * (spec.sigma_rel * scale)
        out.samples[spec.start : spec.start + spec.length] += deltas
    out.attack_kind = "noise"
    return out


def apply_replacement(w: Waveform, spec: AttackSpec) -> Waveform:
    """Overwrite the declared segment on all channels with constants."""
    _check_kind(spec, "replacement")
    _check_segment(w, spec.start, spec.length)
    out = w.copy()
    if spec.length > 0:
        seg = slice(spec.start, spec.start + spec.length)
        if spec.value_mode == "zero":
            out.samples[seg] = 0.0
        elif spec.value_mode == "hold-first":
            out.samples[seg] = w.samples[spec.start]
        else:
            out.samples[seg] = spec.const
    out.attack_kind = "replacement"
    return out


def apply_replay(w: Waveform, spec: AttackSpec) -> Waveform:
    """Copy a pre-fault segment over a later one, hiding the fault.

    The source must lie entirely in the pre-fault half of the window; the
    label is untouched because the underlying fault persists.
    """
    _check_kind(spec, "replay")
    onset = w.samples.shape[0] // 2
    if spec.source_start < 0 or spec.source_start + spec.length > onset:
        raise ConfigError(
            f"replay source [{spec.source_start}, {spec.source_start + spec.length}) "
            f"overlaps the post-fault region (onset {onset})"
        )
    _check_segment(w, spec.target_start, spec.length)
    out = w.copy()
    if spec.length > 0:
        src = slice(spec.source_start, spec.source_start + spec.length)
        dst = slice(spec.target_start, spec.target_start + spec.length)
        out.samples[dst] = w.samples[src]
    out.attack_kind = "replay"
    return out


_INJECTORS = {
    "bias": apply_bias,
    "noise": apply_noise,
    "replacement": apply_replacement,
    "replay": apply_replay,
}


def apply(w: Waveform, spec: AttackSpec) -> Waveform:
    """Dispatch to the injector matching ``spec.kind``."""
    return _INJECTORS[spec.kind](w, spec)
