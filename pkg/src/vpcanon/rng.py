"""Seeded random streams shared by every stochastic stage.

All randomness in the package flows through :class:`SeededRng`, so a run is
fully described by its 64-bit seed. The construction is fixed:

* bit source: PCG64 (``numpy.random.PCG64``) seeded through ``SeedSequence``;
  its raw 64-bit output stream is stable across numpy releases and platforms.
* uniform doubles: the top 53 bits of each raw word, scaled by 2**-53, giving
  values in [0, 1).
* Gaussian variates: Box-Muller on consecutive uniform pairs. Each pair yields
  the cosine variate first, then the sine variate.
* bounded integers: ``floor(u * n)`` on a 53-bit uniform. The bias is below
  n / 2**53, irrelevant for the pool sizes used here.

``numpy.random.Generator`` is deliberately not used for variates, because its
Gaussian and bounded-integer algorithms are allowed to change between numpy
versions.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.typing import NDArray

SEED_MAX = 2**64 - 1

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def check_seed(seed: int) -> int:
    """Validate a 64-bit unsigned seed and return it as a plain int."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be in [0, 2**64 - 1], got {seed}")
    return seed


def derive_seed(seed: int, *labels: object) -> int:
    """Derive a child seed from a parent seed and a stage label path.

    The child is the first 8 bytes (little-endian) of a BLAKE2b digest over
    the decimal parent seed and the labels joined with ``/``. Distinct label
    paths give statistically independent streams.

    Example:
        >>> derive_seed(0, "f0-awgn") == derive_seed(0, "f0-awgn")
        True
    """
    seed = check_seed(seed)
    key = "/".join([str(seed), *(str(label) for label in labels)])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SeededRng:
    """Deterministic variate stream over a PCG64 bit generator."""

    def __init__(self, seed: int):
        self.seed = check_seed(seed)
        self._bits = np.random.PCG64(self.seed)

    def uniform(self, size: int) -> NDArray[np.float64]:
        """Return ``size`` doubles in [0, 1)."""
        if size == 0:
            return np.empty(0, dtype=np.float64)
        raw = np.asarray(self._bits.random_raw(size), dtype=np.uint64)
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, size: int) -> NDArray[np.float64]:
        """Return ``size`` standard normal variates (Box-Muller)."""
        n_pairs = (size + 1) // 2
        u = self.uniform(2 * n_pairs).reshape(n_pairs, 2)
        # 1 - u lies in (0, 1], so the log is finite
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        angle = _TWO_PI * u[:, 1]
        out = np.empty((n_pairs, 2), dtype=np.float64)
        out[:, 0] = radius * np.cos(angle)
        out[:, 1] = radius * np.sin(angle)
        return out.reshape(-1)[:size]

    def integers(self, n: int, size: int) -> NDArray[np.int64]:
        """Return ``size`` integers uniform on ``range(n)``."""
        if n < 1:
            raise ValueError(f"integer range must be positive, got {n}")
        return np.minimum((self.uniform(size) * n).astype(np.int64), n - 1)

    def choice(self, n: int) -> int:
        """Return one index uniform on ``range(n)``."""
        return int(self.integers(n, 1)[0])

    def sample(self, n: int, k: int) -> NDArray[np.int64]:
        """Draw ``k`` distinct indices from ``range(n)`` (partial Fisher-Yates).

        The result is in draw order.
        """
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} without replacement")
        idx = np.arange(n, dtype=np.int64)
        u = self.uniform(k)
        for i in range(k):
            j = i + min(int(u[i] * (n - i)), n - i - 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k].copy()
