"""Traffic and synchronization-interval accounting over a WAN.

Each round every participant downloads the shared model and uploads its local
model once, uncompressed. Transfers run upload-then-download on a uniform
per-link bandwidth, so the round interval is local training time plus two
model transfers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError
from .params import ModelSpec


@dataclass(frozen=True)
class WanModel:
    bandwidth: float = 12.5e6  # bytes/s, a 100 Mbit/s link
    per_epoch_seconds: float = 60.0
    wire_bytes_per_param: int = 4

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise InvalidInputError("bandwidth must be positive")
        if not self.per_epoch_seconds > 0:
            raise InvalidInputError("per_epoch_seconds must be positive")
        if self.wire_bytes_per_param < 1:
            raise InvalidInputError("wire_bytes_per_param must be >= 1")


@dataclass(frozen=True)
class CommRecord:
    round_index: int
    upload_bytes: int
    download_bytes: int
    interval_seconds: float
    training_seconds: float = 0.0

    @property
    def transfer_seconds(self) -> float:
        return self.interval_seconds - self.training_seconds


def model_wire_bytes(spec: ModelSpec | int, w: WanModel) -> int:
    count = spec if isinstance(spec, int) else spec.param_count
    if count < 1:
        raise InvalidInputError("param_count must be >= 1")
    return w.wire_bytes_per_param * count


def round_comm(spec: ModelSpec | int, w: WanModel, k: int, epochs: int,
               round_index: int = 0) -> CommRecord:
    if k < 1 or epochs < 1:
        raise InvalidInputError("need K >= 1 and T >= 1")
    size = model_wire_bytes(spec, w)
    training = epochs * w.per_epoch_seconds
    transfer = 0.0 if math.isinf(w.bandwidth) else 2 * size / w.bandwidth
    return CommRecord(round_index, k * size, k * size, training + transfer, training)


def total_bytes(records) -> int:
    return sum(r.upload_bytes + r.download_bytes for r in records)
