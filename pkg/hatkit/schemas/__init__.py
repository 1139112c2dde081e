from .config import (
    DataConfig,
    DecodeConfig,
    FusionWeights,
    Head,
    LossKind,
    ModelDims,
    Optimizer,
    RunConfig,
    SweepGrid,
    TrainConfig,
    TrendConfig,
)
from .reports import CheckResult, EpochMetrics, EvalReport, WerReport
from .vocab import BLANK_ID, LabelSequence, Vocab

__all__ = [
    "BLANK_ID",
    "CheckResult",
    "DataConfig",
    "DecodeConfig",
    "EpochMetrics",
    "EvalReport",
    "FusionWeights",
    "Head",
    "LabelSequence",
    "LossKind",
    "ModelDims",
    "Optimizer",
    "RunConfig",
    "SweepGrid",
    "TrainConfig",
    "TrendConfig",
    "Vocab",
    "WerReport",
]
