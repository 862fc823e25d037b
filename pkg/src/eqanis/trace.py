"""Time-sampled mean magnetic moment at one position."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MomentTrace:
    times: np.ndarray  # (nt,) s
    moments: np.ndarray  # (nt, 3) A m^2
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    model: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.moments = np.asarray(self.moments, dtype=float)
        if self.moments.shape != (self.times.size, 3):
            raise ValueError("moments must have shape (len(times), 3)")

    def __len__(self):
        return self.times.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "m_x", "m_y", "m_z"])
            for t, m in zip(self.times, self.moments):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in m])

    @classmethod
    def from_csv(cls, path, **kw):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:4], **kw)
