"""Operational class labels: 1 normal state plus 24 open-circuit faults.

Fault classes enumerate (inverter, switch) pairs over 4 inverters with
6 IGBT switches each. Class 0 is the fault-free state; fault classes are
``(inverter - 1) * 6 + switch`` so the encoding is a bijection onto 1..24.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

N_INVERTERS = 4
N_SWITCHES = 6
N_CLASSES = 1 + N_INVERTERS * N_SWITCHES


def encode_label(inverter: int, switch: int, n_switches: int = N_SWITCHES) -> int:
    """Map an (inverter, switch) fault pair to its class id."""
    if inverter < 1 or switch < 1 or switch > n_switches:
        raise ConfigError(f"invalid fault pair ({inverter}, {switch})")
    return (inverter - 1) * n_switches + switch


def decode_label(class_id: int, n_switches: int = N_SWITCHES) -> tuple[int, int]:
    """Inverse of :func:`encode_label`; only valid for fault classes (id >= 1)."""
    if class_id < 1:
        raise ConfigError(f"class {class_id} is not a fault class")
    idx = class_id - 1
    return idx // n_switches + 1, idx % n_switches + 1


def inverter_of(class_id: int, n_switches: int = N_SWITCHES) -> int:
    """Inverter index for a class id, with 0 meaning the normal state."""
    if class_id == 0:
        return 0
    return decode_label(class_id, n_switches)[0]


@dataclass(frozen=True)
class ClassLabel:
    """Ground-truth operational state of one waveform window.

    ``class_id == 0`` is the normal state and carries no (inverter, switch)
    pair; every fault class carries both and re-encodes to its own id.
    """

    class_id: int
    inverter: int | None = None
    switch: int | None = None

    def __post_init__(self) -> None:
        if self.class_id == 0:
            if self.inverter is not None or self.switch is not None:
                raise ConfigError("normal label must not carry a fault pair")
        else:
            if self.inverter is None or self.switch is None:
                raise ConfigError("fault label requires inverter and switch")
            if encode_label(self.inverter, self.switch) != self.class_id:
                raise ConfigError(
                    f"class {self.class_id} does not encode ({self.inverter}, {self.switch})"
                )

    @classmethod
    def normal(cls) -> "ClassLabel":
        return cls(0)

    @classmethod
    def fault(cls, inverter: int, switch: int) -> "ClassLabel":
        return cls(encode_label(inverter, switch), inverter, switch)

    @classmethod
    def from_class_id(cls, class_id: int) -> "ClassLabel":
        if class_id == 0:
            return cls.normal()
        inverter, switch = decode_label(class_id)
        return cls(class_id, inverter, switch)
