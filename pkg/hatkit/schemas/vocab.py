from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field

BLANK_ID = 0

# Label ids in 1..=|V|; never contains the blank id.
LabelSequence = Tuple[int, ...]


class Vocab(BaseModel):
    """Label vocabulary V plus the blank token at index 0."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(gt=0)

    @property
    def extended_size(self) -> int:
        return self.size + 1
