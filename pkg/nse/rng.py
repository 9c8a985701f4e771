from dataclasses import dataclass

import numpy as np

from nse.errors import ParameterDomainError

_U64 = 2**64
STREAM_STRIDE = 2**16


@dataclass(frozen=True)
class RngSeed:
    """
    A (seed, stream_id) pair naming one independent random stream.

    Streams are Philox keys, so a stream's draws depend only on the pair and
    never on which thread or in which order it is consumed.
    """
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < _U64:
                raise ParameterDomainError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        key = np.array([int(self.seed), int(self.stream_id)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, replication: int, sequence: int = 0) -> "RngSeed":
        """Stream for the `sequence`-th draw of replication `replication`."""
        if not 0 <= sequence < STREAM_STRIDE:
            raise ParameterDomainError(f"sequence must lie in [0, {STREAM_STRIDE}), got {sequence}")
        return RngSeed(self.seed, (replication * STREAM_STRIDE + sequence) % _U64)

    def offset(self, k: int) -> "RngSeed":
        return RngSeed(self.seed, (self.stream_id + k) % _U64)

    def spawn(self, k: int) -> "RngSeed":
        """Independent base seed for the k-th nested study (stream ids restart at 0)."""
        state = np.random.SeedSequence([int(self.seed), int(self.stream_id), int(k)]).generate_state(1, np.uint64)
        return RngSeed(int(state[0]), 0)
