"""Seed derivation so that every random stream is a pure function of its coordinates."""

import numpy as np

# stream tags
PARTITION = 1
SPLIT = 2
INIT = 3


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def epoch_rng(seed: int, participant_id: int, round_index: int, epoch: int) -> np.random.Generator:
    """Generator for one (participant, round, epoch); independent of execution order."""
    return np.random.default_rng([seed, participant_id, round_index, epoch])
