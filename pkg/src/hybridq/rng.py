"""Counter-based random streams (Philox4x32-10), vectorised over trajectories.

Every draw is a pure function of ``(seed, traj_index, step, stream, slot)``, so
results do not depend on how trajectories are batched or scheduled.
"""

from __future__ import annotations

import numpy as np

MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_ROUNDS = 10

WIENER = 0
JUMPS = 1
AUX = 2


def philox4x32(counter, key):
    """Philox4x32-10 block function.

    Parameters
    ----------
    counter : array of shape (4, ...) holding 32-bit words (any unsigned dtype)
    key : array of shape (2, ...) holding 32-bit words, broadcastable to counter

    Returns
    -------
    numpy.ndarray
        uint64 array of shape (4, ...) with values below 2**32.
    """
    c0, c1, c2, c3 = (np.asarray(w, dtype=np.uint64) & MASK32 for w in counter)
    k0, k1 = (np.asarray(w, dtype=np.uint64) & MASK32 for w in key)
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + _W0) & MASK32
            k1 = (k1 + _W1) & MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3))


class CounterRNG:
    """Stateless uniform/normal draws keyed by seed, addressed by counters."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self._key = (np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32))

    def _blocks(self, traj, step, stream, n_blocks):
        traj = np.asarray(traj, dtype=np.uint64).reshape(-1, 1)
        block = np.arange(n_blocks, dtype=np.uint64).reshape(1, -1)
        counter = (
            np.uint64(step),
            (np.uint64(stream) << np.uint64(16)) | block,
            traj & MASK32,
            traj >> np.uint64(32),
        )
        return philox4x32(counter, self._key)

    def uniforms(self, traj, step: int, stream: int, count: int) -> np.ndarray:
        """Uniforms in [0, 1), shape ``(len(traj), count)``."""
        if count == 0:
            return np.zeros((np.size(traj), 0))
        words = self._blocks(traj, step, stream, (count + 1) // 2)
        hi = (words[0::2] << np.uint64(32)) | words[1::2]
        # (2, B, blocks) -> (B, 2*blocks), slot order: block-major
        u = (hi >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u = np.moveaxis(u, 0, -1).reshape(u.shape[1], -1)
        return u[:, :count]

    def normals(self, traj, step: int, stream: int, count: int) -> np.ndarray:
        """Standard normals via Box-Muller, shape ``(len(traj), count)``."""
        if count == 0:
            return np.zeros((np.size(traj), 0))
        n_pairs = (count + 1) // 2
        u = self.uniforms(traj, step, stream, 2 * n_pairs)
        u1 = 1.0 - u[:, 0::2]  # (0, 1]
        u2 = u[:, 1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty((u.shape[0], 2 * n_pairs))
        z[:, 0::2] = r * np.cos(2.0 * np.pi * u2)
        z[:, 1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:, :count]
