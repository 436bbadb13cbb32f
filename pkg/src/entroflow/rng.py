"""Counter-based random number streams.

All randomness in the package is drawn from Philox keyed by
``(master seed, channel)``.  The draw for simulation step ``k`` and particle
``i`` lives at a fixed 64-bit word index of that keyed stream, so results are
bit-reproducible no matter how particles are chunked across workers, and any
two distinct (channel, step, particle) triples use non-overlapping counters.

Normals are produced by inverting the standard normal CDF on uniforms built
from one raw 64-bit word each; unlike ziggurat sampling this consumes a fixed
number of words, which is what makes the explicit counter layout possible.
"""
import numpy as np
from scipy.special import ndtri

# channel ids keep independent uses of the same master seed apart
CHANNEL_FORWARD = 1
CHANNEL_REVERSED = 2
CHANNEL_SECOND = 3
CHANNEL_INIT = 4
CHANNEL_ERGODIC = 5
CHANNEL_PROBE = 6

_INV_2_53 = float(2.0 ** -53)


class NoiseStream:
    """Deterministic lattice of random words for one (seed, channel) pair."""

    def __init__(self, seed, channel, width):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.channel = int(channel)
        self.width = int(width)  # words reserved per step (>= particle count)

    def _raw(self, start, count):
        """Return `count` raw 64-bit words beginning at word index `start`."""
        first_block, offset = divmod(start, 4)
        nblocks = -(-(offset + count) // 4)
        bg = np.random.Philox(key=[self.seed, self.channel])
        state = bg.state
        state["state"]["counter"] = np.array([first_block, 0, 0, 0], dtype=np.uint64)
        bg.state = state
        words = bg.random_raw(4 * nblocks)
        return words[offset:offset + count]

    def uniforms(self, step, lo=0, hi=None):
        """Open-interval uniforms for particles [lo, hi) at a given step."""
        hi = self.width if hi is None else hi
        words = self._raw(step * self.width + lo, hi - lo)
        return ((words >> np.uint64(11)) + 0.5) * _INV_2_53

    def normals(self, step, lo=0, hi=None):
        return ndtri(self.uniforms(step, lo, hi))
