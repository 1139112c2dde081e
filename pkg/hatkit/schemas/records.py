"""Records of the on-disk exchange formats."""

from typing import Any, Dict, List, Tuple

from pydantic import BaseModel, Field

from hatkit.schemas.config import Head, ModelDims


class HypothesisRecord(BaseModel):
    tokens: List[int]
    log_prob: float


class NBestRecord(BaseModel):
    """One line of an N-best exchange file."""

    utt_id: str
    reference: List[int]
    hypotheses: List[HypothesisRecord]


class DatasetManifest(BaseModel):
    name: str
    split: str = ""
    seed: int
    num_utts: int
    vocab_size: int
    feature_dim: int
    T_range: Tuple[int, int]
    U_range: Tuple[int, int]
    noise_level: float
    domain_lm: bool = False


class TensorEntry(BaseModel):
    name: str
    shape: List[int]
    offset: int


class CheckpointManifest(BaseModel):
    dims: ModelDims
    vocab_size: int
    head: Head
    seed: int
    epoch: int
    tensors: List[TensorEntry] = Field(default_factory=list)
    optimizer: Dict[str, Any] = Field(default_factory=dict)


class LmHeader(BaseModel):
    order: int = Field(ge=1)
    alpha: float = Field(gt=0.0)
    vocab_size: int = Field(gt=0)
