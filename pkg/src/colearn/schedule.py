"""Learning-rate schedules (cyclical, exponential) and local-epoch policies."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidInputError

SHARED_RATE = 0.01
DECAY = 0.25
DEFAULT_EPSILON = 0.01
CAP_DOUBLINGS = 10


@dataclass(frozen=True)
class ClrSchedule:
    """Per-round exponential annealing that restarts at every round."""

    shared_rate: float = SHARED_RATE
    decay: float = DECAY

    def __post_init__(self):
        if not self.shared_rate > 0:
            raise InvalidInputError("shared_rate must be positive")
        if not 0 < self.decay < 1:
            raise InvalidInputError("decay must lie in (0, 1)")


@dataclass(frozen=True)
class ElrSchedule:
    """One exponential decay across the whole epoch budget; never restarts."""

    initial_rate: float = SHARED_RATE
    decay: float = DECAY
    total_epoch_budget: int = 1

    def __post_init__(self):
        if not self.initial_rate > 0:
            raise InvalidInputError("initial_rate must be positive")
        if not 0 < self.decay < 1:
            raise InvalidInputError("decay must lie in (0, 1)")
        if self.total_epoch_budget < 1:
            raise InvalidInputError("total_epoch_budget must be >= 1")


@dataclass(frozen=True)
class IlePolicy:
    initial_epochs: int = 5
    epsilon: float = DEFAULT_EPSILON
    cap: int | None = None

    def __post_init__(self):
        if self.initial_epochs < 1:
            raise InvalidInputError("initial_epochs must be >= 1")
        if not 0 < self.epsilon < 1:
            raise InvalidInputError("epsilon must lie in (0, 1)")
        if self.cap is None:
            object.__setattr__(self, "cap", self.initial_epochs * 2 ** CAP_DOUBLINGS)
        if self.cap < self.initial_epochs:
            raise InvalidInputError("cap must be >= initial_epochs")


@dataclass(frozen=True)
class FlePolicy:
    epochs: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")

    @property
    def initial_epochs(self) -> int:
        return self.epochs


def clr_rate(s: ClrSchedule, j: int, round_length: int) -> float:
    """Rate for 0-based epoch ``j`` of a round lasting ``round_length`` epochs."""
    if round_length < 1:
        raise InvalidInputError("round_length must be >= 1")
    if not 0 <= j <= round_length:
        raise InvalidInputError(f"epoch {j} outside [0, {round_length}]")
    return s.shared_rate * s.decay ** (j / round_length)


def elr_rate(s: ElrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise InvalidInputError("epoch must be >= 0")
    return s.initial_rate * s.decay ** (epoch / s.total_epoch_budget)


def next_epochs(p: IlePolicy, round_index: int, prev_epochs: int | None,
                change: float | None) -> int:
    """Local epochs for ``round_index``: double once the shared model stops moving."""
    if round_index == 0:
        return p.initial_epochs
    if prev_epochs is None or prev_epochs < 1:
        raise InvalidInputError("prev_epochs must be >= 1 after round 0")
    if change is None or change < 0:
        raise InvalidInputError("change must be a non-negative number after round 0")
    if change <= p.epsilon:
        return min(2 * prev_epochs, p.cap)
    return prev_epochs


def fle_epochs(p: FlePolicy, round_index: int = 0) -> int:
    return p.epochs


def plan_epochs(policy: IlePolicy | FlePolicy, round_index: int,
                prev_epochs: int | None = None, change: float | None = None) -> int:
    if isinstance(policy, IlePolicy):
        return next_epochs(policy, round_index, prev_epochs, change)
    return fle_epochs(policy, round_index)


def round_rate_fn(schedule: ClrSchedule | ElrSchedule, round_length: int,
                  epoch_offset: int = 0):
    """Map a 0-based in-round epoch to its learning rate.

    Cyclical schedules restart at every round; the exponential schedule reads the
    global epoch ``epoch_offset + j``.
    """
    if isinstance(schedule, ClrSchedule):
        return lambda j: clr_rate(schedule, j, round_length)
    return lambda j: elr_rate(schedule, epoch_offset + j)
