"""Dense linear-algebra helpers, a portable seeded RNG, and a gradient checker.

Everything in this package computes in 64-bit floats. Matrices are plain
2-D ``numpy`` arrays in row-major order; vectors are 1-D arrays. The random
source is a splitmix64 generator written out here so that a given seed
produces the same draw sequence on every platform and every numpy version.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ContractViolationError, NumericalError

_MASK64 = (1 << 64) - 1
# splitmix64 constants (Steele, Lea & Flood, "Fast splittable pseudorandom
# number generators", OOPSLA 2014).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SeededRng:
    """splitmix64 pseudorandom generator.

    The state advances by a fixed odd increment and the output is a mixed
    copy of the state, so any 64-bit seed (including 0) is valid. Draw
    sequences are byte-identical across runs and platforms for equal seeds.

    Instances are cheap but stateful; do not share one across concurrent
    tasks.
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int) -> None:
        self.seed = seed & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        """Return the next raw 64-bit output."""
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Draw a float in [lo, hi).

        Uses the top 53 bits of the raw output, so all 2^53 representable
        offsets in [0, 1) are reachable.
        """
        if not lo < hi:
            raise ContractViolationError(f"uniform bounds require lo < hi, got [{lo}, {hi})")
        u = (self.next_u64() >> 11) * 2.0**-53
        value = lo + u * (hi - lo)
        if value >= hi:  # guard the rare rounding onto the open bound
            value = np.nextafter(hi, lo)
        return value

    def index(self, n: int) -> int:
        """Draw an integer in [0, n)."""
        if n < 1:
            raise ContractViolationError(f"index bound must be >= 1, got {n}")
        return int(self.uniform(0.0, float(n)))

    def shuffled_indices(self, n: int) -> np.ndarray:
        """Return a Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.index(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def as_matrix(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate and return ``m`` as a 2-D float64 row-major array."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ContractViolationError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def as_vector(v: np.ndarray, name: str = "vector") -> np.ndarray:
    """Validate and return ``v`` as a 1-D float64 array."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ContractViolationError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def require_finite(arr: np.ndarray, context: str) -> np.ndarray:
    """Raise :class:`NumericalError` if ``arr`` holds NaN or infinity."""
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {context}")
    return arr


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with explicit shape checking.

    result[i] = sum_j m[i, j] * v[j]
    """
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ContractViolationError(
            f"matvec shape mismatch: matrix is {m.shape[0]}x{m.shape[1]}, "
            f"vector has length {v.shape[0]}"
        )
    return require_finite(m @ v, "matvec result")


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    result[i] = (f(x + h*e_i) - f(x - h*e_i)) / (2h)

    Used throughout the test suite as the independent oracle against which
    analytic gradients are checked.
    """
    if h <= 0:
        raise ContractViolationError(f"step size must be positive, got {h}")
    x = as_vector(x)
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        probe = x.copy()
        probe[i] = x[i] + h
        f_plus = float(f(probe))
        probe[i] = x[i] - h
        f_minus = float(f(probe))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"non-finite function value at probe index {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
