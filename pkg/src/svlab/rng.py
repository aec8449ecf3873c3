"""Deterministic seedable random number generation.

The generator is xoshiro256**. For throughput, an ``Rng`` advances a fixed
bank of ``LANES`` independent xoshiro256** streams and interleaves their
outputs round-robin: output ``i`` comes from lane ``i % LANES``, round
``i // LANES``. Lane ``j`` of an ``Rng`` seeded with ``s`` is initialized
from the splitmix64 sequence of ``s`` (draws ``4*j .. 4*j+3``). The whole
stream is therefore a pure function of the seed, identical on every
platform, and independent of how draws are batched into calls.

``split(child_id)`` derives a child seed by mixing the root seed with the
child id through two splitmix64 rounds, so child streams are deterministic
functions of ``(seed, child_id)`` and unaffected by draws made on the
parent.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_U5 = np.uint64(5)
_U7 = np.uint64(7)
_U9 = np.uint64(9)
_U17 = np.uint64(17)
_U45 = np.uint64(45)
_U57 = np.uint64(57)
_U19 = np.uint64(19)
_U11 = np.uint64(11)

_INV_2_53 = float(2.0 ** -53)


def _splitmix64(x: int) -> int:
    """One output of the splitmix64 sequence whose state is ``x``."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix_seed(seed: int, child_id: int) -> int:
    return _splitmix64(_splitmix64(seed + (child_id + 1) * _GOLDEN) ^ child_id)


class Rng:
    """Seeded deterministic generator (see module docstring for the scheme)."""

    LANES = 4096

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        # splitmix64 state k is seed + (k+1)*GOLDEN, so the whole init
        # sequence vectorizes to one mix over an arange.
        ks = np.arange(4 * self.LANES, dtype=np.uint64)
        x = (np.uint64(self.seed) + (ks + np.uint64(1)) * np.uint64(_GOLDEN))
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        self._s = [z[i::4].copy() for i in range(4)]
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0

    def split(self, child_id: int) -> "Rng":
        """Independent child stream derived from (seed, child_id)."""
        return Rng(_mix_seed(self.seed, int(child_id)))

    def _advance(self) -> np.ndarray:
        """One xoshiro256** step on every lane; returns LANES outputs."""
        s0, s1, s2, s3 = self._s
        r = ((s1 * _U5) << _U7 | (s1 * _U5) >> _U57) * _U9
        t = s1 << _U17
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[0], self._s[1], self._s[2] = s0, s1, s2
        self._s[3] = (s3 << _U45) | (s3 >> _U19)
        return r

    def _take(self, n: int) -> np.ndarray:
        avail = self._buf.size - self._pos
        if avail >= n:
            out = self._buf[self._pos : self._pos + n]
            self._pos += n
            return out
        parts = [self._buf[self._pos :]]
        need = n - avail
        rounds = -(-need // self.LANES)
        block = np.empty((rounds, self.LANES), dtype=np.uint64)
        for r in range(rounds):
            block[r] = self._advance()
        flat = block.reshape(-1)
        parts.append(flat[:need])
        self._buf = flat
        self._pos = need
        return np.concatenate(parts)

    def u64(self, size=None):
        """Raw 64-bit outputs; a Python int when size is None."""
        if size is None:
            return int(self._take(1)[0])
        n = int(np.prod(size))
        return self._take(n).reshape(size).copy()

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        """Uniform floats in [lo, hi) with 53-bit resolution."""
        if size is None:
            u = float(self._take(1)[0] >> _U11) * _INV_2_53
            return lo + (hi - lo) * u
        n = int(np.prod(size))
        u = (self._take(n) >> _U11).astype(np.float64) * _INV_2_53
        return (lo + (hi - lo) * u).reshape(size)

    def normal(self, size=None):
        """Standard normal draws via Box-Muller on consecutive uniform pairs."""
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        m = -(-n // 2)
        u = (self._take(2 * m) >> _U11).astype(np.float64) * _INV_2_53
        u1, u2 = u[:m], u[m:]
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1], no log(0)
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if scalar:
            return float(z[0])
        return z.reshape(size)

    def integers(self, upper: int, size=None):
        """Uniform ints in [0, upper); upper must be < 2**53."""
        if size is None:
            return int(self.uniform() * upper)
        u = self.uniform(size=size)
        return np.minimum((u * upper).astype(np.int64), upper - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) by sorting uniform keys."""
        return np.argsort(self.uniform(size=n), kind="stable")

    def subsample(self, n: int, k: int) -> np.ndarray:
        """First k indices of a permutation of range(n), sorted ascending."""
        if k >= n:
            return np.arange(n)
        return np.sort(self.permutation(n)[:k])
