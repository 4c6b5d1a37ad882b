from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QTensor:
    """Signed 8-bit tensor; real value = q * 2**-scale_exp.

    Feature maps are (channels, height, width); kernel sets are (M, N, K, K).
    """

    values: np.ndarray
    scale_exp: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype != np.int8:
            if v.size and (v.min() < -128 or v.max() > 127):
                raise ValueError("values outside [-128, 127]")
            v = v.astype(np.int8)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, QTensor):
            return NotImplemented
        return self.scale_exp == other.scale_exp and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"QTensor(dims={self.dims}, scale_exp={self.scale_exp})"

    @classmethod
    def random(cls, shape, rng: np.random.Generator, scale_exp: int = 0, low: int = -128, high: int = 127):
        return cls(rng.integers(low, high + 1, size=shape, dtype=np.int8), scale_exp)

    @classmethod
    def zeros(cls, shape, scale_exp: int = 0):
        return cls(np.zeros(shape, dtype=np.int8), scale_exp)
