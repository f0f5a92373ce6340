"""Time series of named scalar channels."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class DiagnosticsSeries:
    times: np.ndarray
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        chans = {}
        for name, values in self.channels.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != self.times.shape:
                raise ValueError(
                    f"channel {name!r} has length {arr.size}, expected {self.times.size}"
                )
            chans[name] = arr
        self.channels = chans

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    def max(self, name: str) -> float:
        values = self.channels[name]
        return float(values.max()) if values.size else 0.0

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", *self.names])
        for i, t in enumerate(self.times):
            writer.writerow([repr(float(t))] + [repr(float(self.channels[n][i])) for n in self.names])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "DiagnosticsSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(v) for v in row] for row in body]) if body else np.empty((0, len(header)))
        return cls(data[:, 0], {name: data[:, i + 1] for i, name in enumerate(header[1:])})
