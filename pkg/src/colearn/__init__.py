"""Co-learning: synchronous model averaging across simulated data centers.

Participants train locally on private IID shards; a coordinator averages
their parameters each round, adjusts the local epoch count, and records
accuracy, communication volume and synchronization intervals.
"""

from .baselines import ensemble_evaluate, ensemble_train, run_vanilla
from .config import RunConfig, load_config, prepare_data
from .coordinator import FaultPlan, RunHistory, colearn, run_colearning, run_round
from .datasets import Dataset, Shard, gen_gaussian_blobs, gen_xor_rings, load_csv, partition_iid
from .params import ModelSpec, average, gradient, init_params, load_checkpoint, save_checkpoint
from .schedule import ClrSchedule, ElrSchedule, FlePolicy, IlePolicy
from .wansim import WanModel

__all__ = [
    "ClrSchedule", "Dataset", "ElrSchedule", "FaultPlan", "FlePolicy", "IlePolicy", "ModelSpec",
    "RunConfig", "RunHistory", "Shard", "WanModel", "average", "colearn", "ensemble_evaluate",
    "ensemble_train", "gen_gaussian_blobs", "gen_xor_rings", "gradient", "init_params",
    "load_checkpoint", "load_csv", "load_config", "partition_iid", "prepare_data", "run_colearning",
    "run_round", "run_vanilla", "save_checkpoint",
]
