"""N-best exchange files: one JSON line ``{utt_id, reference, hypotheses}`` per utterance."""

from pathlib import Path
from typing import Iterable, List, Union

import orjson
from pydantic import ValidationError

from hatkit.core.errors import StorageError
from hatkit.schemas.records import NBestRecord


def write_nbest(path: Union[str, Path], records: Iterable[NBestRecord]) -> None:
    with open(path, "wb") as f:
        for record in records:
            f.write(orjson.dumps(record.model_dump(mode="json")) + b"\n")


def read_nbest(path: Union[str, Path]) -> List[NBestRecord]:
    records = []
    with open(path, "rb") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(NBestRecord.model_validate(orjson.loads(line)))
            except (orjson.JSONDecodeError, ValidationError) as e:
                raise StorageError(f"{path}:{line_no}: bad N-best record ({e})")
    return records
