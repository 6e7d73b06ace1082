"""Time-series container shared by both models and the I/O layer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

COLUMNS = (
    "t_s",
    "delta_rad",
    "delta_dot_radps",
    "vf_pos_mag_pu",
    "vf_pos_ang_rad",
    "vf_neg_mag_pu",
    "omega_g_radps",
)


@dataclass
class Trajectory:
    t: np.ndarray
    delta: np.ndarray
    delta_dot: np.ndarray
    vf_pos_mag: np.ndarray
    vf_pos_ang: np.ndarray
    vf_neg_mag: np.ndarray
    omega_g: np.ndarray
    events: list = field(default_factory=list)
    model: str = ""
    diverged: bool = False
    diverged_at: float | None = None

    def __post_init__(self):
        cols = [np.asarray(getattr(self, n), dtype=float) for n in self._fields()]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise ValidationError("Trajectory equal column lengths")
        if n > 1 and not np.all(np.diff(cols[0]) > 0):
            raise ValidationError("Trajectory strictly increasing t")
        for name, c in zip(self._fields(), cols):
            setattr(self, name, c)

    @staticmethod
    def _fields():
        return ("t", "delta", "delta_dot", "vf_pos_mag", "vf_pos_ang", "vf_neg_mag", "omega_g")

    @classmethod
    def empty(cls, model: str = "") -> "Trajectory":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z, z, model=model)

    def __len__(self):
        return len(self.t)

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, n) for n in self._fields()]) if len(self) else np.zeros((0, 7))
