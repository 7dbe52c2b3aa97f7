"""Multipath component records and their CSV format."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

COLUMNS = ("snapshot", "amp_real", "amp_imag", "delay_s", "aoa_rad", "eoa_rad", "cluster_label", "track_id")
UNLABELLED = -1


class RecordFormatError(ValueError):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"{message} (line {line})")
        self.line = line


@dataclass
class MpcRecord:
    """Columnar MPC table; label and track columns use -1 for "none"."""

    snapshot: np.ndarray
    amplitude: np.ndarray
    delay: np.ndarray
    aoa: np.ndarray
    eoa: np.ndarray
    cluster_label: np.ndarray | None = None
    track_id: np.ndarray | None = None
    _n: int = field(init=False, repr=False, default=0)

    def __post_init__(self) -> None:
        self.snapshot = np.asarray(self.snapshot, dtype=int)
        self.amplitude = np.asarray(self.amplitude, dtype=complex)
        self.delay = np.asarray(self.delay, dtype=float)
        self.aoa = np.asarray(self.aoa, dtype=float)
        self.eoa = np.asarray(self.eoa, dtype=float)
        n = self.snapshot.size
        self.cluster_label = np.full(n, UNLABELLED) if self.cluster_label is None else np.asarray(self.cluster_label, dtype=int)
        self.track_id = np.full(n, UNLABELLED) if self.track_id is None else np.asarray(self.track_id, dtype=int)
        if any(a.shape != (n,) for a in (self.amplitude, self.delay, self.aoa, self.eoa, self.cluster_label, self.track_id)):
            raise ValueError("MPC columns must be 1-D with equal length")
        if np.any((self.eoa < 0) | (self.eoa > np.pi)):
            raise ValueError("EOA must lie in [0, pi]")
        self._n = n

    def __len__(self) -> int:
        return self._n

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @property
    def snapshots(self) -> np.ndarray:
        return np.unique(self.snapshot)

    def select(self, snapshot: int) -> "MpcRecord":
        m = self.snapshot == snapshot
        return MpcRecord(self.snapshot[m], self.amplitude[m], self.delay[m], self.aoa[m], self.eoa[m], self.cluster_label[m], self.track_id[m])

    @classmethod
    def concatenate(cls, records: list["MpcRecord"]) -> "MpcRecord":
        if not records:
            return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0), np.empty(0))
        cols = [np.concatenate([getattr(r, name) for r in records]) for name in ("snapshot", "amplitude", "delay", "aoa", "eoa", "cluster_label", "track_id")]
        return cls(*cols)

    @classmethod
    def from_cluster_set(cls, cset, snapshot: int) -> "MpcRecord":
        """Ground-truth rays of a cluster set (amplitude carries the ray's co-polar phase)."""
        parts = []
        for c in cset.alive:
            ang = c.ray_angles()
            m = c.n_rays
            amp = np.sqrt(c.power / m) * np.exp(1j * c.ray_phases[:, 0])
            parts.append(cls(np.full(m, snapshot), amp, np.full(m, c.delay), ang[:, 0], ang[:, 1], np.full(m, c.id)))
        return cls.concatenate(parts)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for i in range(len(self)):
                w.writerow(
                    [
                        int(self.snapshot[i]),
                        repr(float(self.amplitude[i].real)),
                        repr(float(self.amplitude[i].imag)),
                        repr(float(self.delay[i])),
                        repr(float(self.aoa[i])),
                        repr(float(self.eoa[i])),
                        "" if self.cluster_label[i] == UNLABELLED else int(self.cluster_label[i]),
                        "" if self.track_id[i] == UNLABELLED else int(self.track_id[i]),
                    ]
                )

    @classmethod
    def read_csv(cls, path) -> "MpcRecord":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise RecordFormatError("empty MPC file", 1)
            required = COLUMNS[:6]
            if tuple(header[:6]) != required:
                raise RecordFormatError(f"expected header starting {','.join(required)}", 1)
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    snap = int(row[0])
                    vals = [float(x) for x in row[1:6]]
                    label = int(row[6]) if len(row) > 6 and row[6] != "" else UNLABELLED
                    track = int(row[7]) if len(row) > 7 and row[7] != "" else UNLABELLED
                except (ValueError, IndexError) as exc:
                    raise RecordFormatError(f"malformed MPC row: {exc}", lineno) from None
                rows.append((snap, complex(vals[0], vals[1]), vals[2], vals[3], vals[4], label, track))
        if not rows:
            return cls.concatenate([])
        cols = list(zip(*rows))
        return cls(*(np.array(c) for c in cols))
