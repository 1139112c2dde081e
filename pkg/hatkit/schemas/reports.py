from typing import Optional

from pydantic import BaseModel, Field


class WerReport(BaseModel):
    substitutions: int = Field(default=0, ge=0)
    insertions: int = Field(default=0, ge=0)
    deletions: int = Field(default=0, ge=0)
    reference_words: int = Field(default=0, ge=0)

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.reference_words == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.reference_words

    def __add__(self, other: "WerReport") -> "WerReport":
        return WerReport(
            substitutions=self.substitutions + other.substitutions,
            insertions=self.insertions + other.insertions,
            deletions=self.deletions + other.deletions,
            reference_words=self.reference_words + other.reference_words,
        )


class EpochMetrics(BaseModel):
    epoch: int
    loss: float
    token_error: float
    expected_risk: float
    dev_nll: float


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    error: Optional[str] = None


class EvalReport(BaseModel):
    """Model quality on one dataset split."""

    nll: float
    token_error: float
    expected_risk: float
    wer: WerReport = Field(default_factory=WerReport)
