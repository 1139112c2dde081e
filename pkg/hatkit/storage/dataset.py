"""Dataset directories: ``utterances.jsonl`` (one orjson line per utterance) + ``manifest.json``."""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import orjson

from hatkit.core.errors import StorageError
from hatkit.schemas.records import DatasetManifest
from hatkit.services.synth import Dataset, Utterance

logger = logging.getLogger(__name__)

UTTERANCES_FILE = "utterances.jsonl"
MANIFEST_FILE = "manifest.json"
JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS


def write_json(path: Path, payload) -> None:
    path.write_bytes(orjson.dumps(payload, option=JSON_OPTIONS | orjson.OPT_SERIALIZE_NUMPY) + b"\n")


def write_dataset(directory: Union[str, Path], dataset: Dataset, manifest: DatasetManifest) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / UTTERANCES_FILE, "wb") as f:
        for utt in dataset:
            record = {"utt_id": utt.utt_id, "labels": list(utt.labels), "features": utt.features}
            f.write(orjson.dumps(record, option=orjson.OPT_SERIALIZE_NUMPY) + b"\n")
    write_json(directory / MANIFEST_FILE, manifest.model_dump(mode="json"))
    logger.info(f"Wrote {len(dataset)} utterances to {directory}")
    return directory


def read_manifest(directory: Union[str, Path]) -> DatasetManifest:
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise StorageError(f"dataset manifest not found: {path}")
    return DatasetManifest.model_validate(orjson.loads(path.read_bytes()))


def read_dataset(directory: Union[str, Path]) -> Dataset:
    directory = Path(directory)
    manifest = read_manifest(directory)
    utterances = []
    with open(directory / UTTERANCES_FILE, "rb") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = orjson.loads(line)
                features = np.asarray(record["features"], dtype=np.float64)
                labels = tuple(int(k) for k in record["labels"])
                utt_id = str(record["utt_id"])
            except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise StorageError(f"{directory / UTTERANCES_FILE}:{line_no}: bad utterance record ({e})")
            if features.ndim != 2 or features.shape[1] != manifest.feature_dim:
                raise StorageError(f"{utt_id}: features do not match feature_dim {manifest.feature_dim}")
            utterances.append(Utterance(utt_id=utt_id, features=features, labels=labels))
    if len(utterances) != manifest.num_utts:
        raise StorageError(f"{directory}: manifest lists {manifest.num_utts} utterances, found {len(utterances)}")
    return Dataset(name=manifest.name, vocab_size=manifest.vocab_size, utterances=utterances)
