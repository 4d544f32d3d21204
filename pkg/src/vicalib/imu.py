"""IMU sample containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ImuSample:
    t: int
    gyro: np.ndarray
    accel: np.ndarray
    temp_c: float | None = None


class ImuData:
    """Column-oriented batch of IMU samples.

    ``gyro`` in rad/s and ``accel`` in m/s^2, both (N, 3); ``temp_c`` is NaN
    where no temperature was recorded. Indexing yields :class:`ImuSample`.
    """

    __slots__ = ("t", "gyro", "accel", "temp_c")

    def __init__(self, t, gyro, accel, temp_c=None):
        self.t = np.array(t, dtype=np.int64).reshape(-1)
        n = len(self.t)
        self.gyro = np.array(gyro, dtype=np.float64).reshape(n, 3)
        self.accel = np.array(accel, dtype=np.float64).reshape(n, 3)
        if temp_c is None:
            temp_c = np.full(n, np.nan)
        self.temp_c = np.array(temp_c, dtype=np.float64).reshape(n)
        if n > 1 and np.any(np.diff(self.t) <= 0):
            i = int(np.argmax(np.diff(self.t) <= 0))
            raise ValueError(f"IMU timestamps not strictly increasing at index {i + 1}")

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls(
            [s.t for s in samples],
            [s.gyro for s in samples],
            [s.accel for s in samples],
            [np.nan if s.temp_c is None else s.temp_c for s in samples],
        )

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return ImuData(self.t[i], self.gyro[i], self.accel[i], self.temp_c[i])
        temp = float(self.temp_c[i])
        return ImuSample(int(self.t[i]), self.gyro[i].copy(), self.accel[i].copy(), None if np.isnan(temp) else temp)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, ImuData):
            return NotImplemented
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.gyro, other.gyro)
            and np.array_equal(self.accel, other.accel)
            and np.array_equal(self.temp_c, other.temp_c, equal_nan=True)
        )

    @property
    def times_s(self):
        return self.t * 1e-9

    def __repr__(self):
        return f"ImuData(n={len(self)})"
