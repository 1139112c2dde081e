"""Run-level configuration models (loaded from YAML, overridden by CLI flags)."""

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class Head(str, Enum):
    RNNT = "rnnt"
    HAT = "hat"


class Optimizer(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class LossKind(str, Enum):
    NLL = "nll"
    MWER = "mwer"


class FusionWeights(BaseModel):
    """λ₁ (internal-LM subtraction) and λ₂ (external-LM addition); (0, 0) means no fusion."""

    lambda1: float = Field(default=0.0, ge=0.0)
    lambda2: float = Field(default=0.0, ge=0.0)

    @property
    def is_zero(self) -> bool:
        return self.lambda1 == 0.0 and self.lambda2 == 0.0


class DecodeConfig(BaseModel):
    beam_size: int = Field(default=8, ge=1)
    temperature: float = Field(default=1.0, gt=0.0)
    length_norm: bool = True
    fusion: FusionWeights = Field(default_factory=FusionWeights)
    max_symbols_per_step: int = Field(default=5, ge=1)
    head: Head = Head.HAT
    # Whether the temperature also divides the HAT blank logit.
    blank_temperature: bool = True


class ModelDims(BaseModel):
    vocab_size: int = Field(default=6, gt=0)
    d_in: Optional[int] = Field(default=None, gt=0)
    d_h: int = Field(default=32, gt=0)
    d_e: int = Field(default=16, gt=0)
    d_p: int = Field(default=32, gt=0)
    d_j: int = Field(default=32, gt=0)
    # Weights are drawn from N(0, (init_scale / sqrt(fan_in))^2); biases start at zero.
    init_scale: float = Field(default=1.0, gt=0.0)

    @property
    def input_dim(self) -> int:
        # One feature channel per label plus one for silence.
        return self.d_in if self.d_in is not None else self.vocab_size + 1


class TrainConfig(BaseModel):
    seed: int = 0
    learning_rate: Optional[float] = Field(default=None, ge=0.0)
    optimizer: Optimizer = Optimizer.ADAM
    epochs: int = Field(default=10, ge=0)
    batch_size: int = Field(default=8, ge=1)
    loss: LossKind = LossKind.NLL
    mwer_beam: int = Field(default=4, ge=1)
    temperature: float = Field(default=1.0, gt=0.0)
    head: Head = Head.HAT
    blank_temperature: bool = True
    max_symbols_per_step: int = Field(default=5, ge=1)
    include_reference: bool = False
    length_normalized_posterior: bool = False
    nll_weight: float = Field(default=0.0, ge=0.0)
    # Token id splitting hypotheses into words for the MWER risk; None scores tokens.
    word_boundary: Optional[int] = Field(default=None, ge=1)
    eval_beam: int = Field(default=4, ge=1)
    jobs: Optional[int] = Field(default=None, ge=1)
    # Batches between DEBUG progress lines.
    log_every: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _default_learning_rate(self) -> "TrainConfig":
        if self.learning_rate is None:
            self.learning_rate = 1e-4 if self.loss == LossKind.MWER else 1e-3
        return self


class DataConfig(BaseModel):
    seed: int = 0
    vocab_size: int = Field(default=6, gt=0)
    num_train: int = Field(default=200, ge=1)
    num_dev: int = Field(default=40, ge=1)
    num_eval: int = Field(default=40, ge=1)
    T_range: Tuple[int, int] = (8, 12)
    U_range: Tuple[int, int] = (2, 5)
    noise_level: float = Field(default=0.6, ge=0.0)
    # Draw references from a peaked bigram "domain" LM instead of uniformly.
    domain_lm: bool = False
    domain_sharpness: float = Field(default=3.0, gt=0.0)
    lm_corpus_size: int = Field(default=2000, ge=1)
    lm_order: int = Field(default=2, ge=1)
    lm_alpha: float = Field(default=0.1, gt=0.0)


class SweepGrid(BaseModel):
    beams: List[int] = Field(default_factory=lambda: [1, 2, 4, 8], min_length=1)
    temperatures: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    length_norm: List[bool] = Field(default_factory=lambda: [True, False], min_length=1)
    lambda1s: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    lambda2s: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    reference_beam: int = Field(default=8, ge=1)

    @field_validator("beams")
    @classmethod
    def _positive_beams(cls, beams: List[int]) -> List[int]:
        if any(b < 1 for b in beams):
            raise ValueError("beam sizes must be >= 1")
        return beams

    @field_validator("temperatures")
    @classmethod
    def _positive_temperatures(cls, temperatures: List[float]) -> List[float]:
        if any(z <= 0 for z in temperatures):
            raise ValueError("temperatures must be > 0")
        return temperatures

    @property
    def size(self) -> int:
        return (
            len(self.beams) * len(self.temperatures) * len(self.length_norm)
            * len(self.lambda1s) * len(self.lambda2s)
        )


class TrendConfig(BaseModel):
    """Directional acceptance runs: NLL seed model, MWER fine-tune, decode comparisons."""

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    nll_epochs: int = Field(default=10, ge=1)
    mwer_epochs: int = Field(default=3, ge=1)
    mwer_learning_rate: float = Field(default=1e-4, ge=0.0)
    beams: List[int] = Field(default_factory=lambda: [1, 2, 4, 8], min_length=1)
    lambda1s: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3], min_length=1)
    lambda2s: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6], min_length=1)


class RunConfig(BaseModel):
    """Everything a subcommand may read; each subcommand uses its own sections."""

    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelDims = Field(default_factory=ModelDims)
    train: TrainConfig = Field(default_factory=TrainConfig)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)
    sweep: SweepGrid = Field(default_factory=SweepGrid)
    trends: TrendConfig = Field(default_factory=TrendConfig)
