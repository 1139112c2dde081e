"""Checkpoint directories: raw float64 tensors in ``tensors.bin`` + ``manifest.json``.

Tensors are written in a fixed order (model parameters, then optimizer moments under
``opt/``) with no timestamps, so equal states give byte-identical checkpoints.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import orjson

from hatkit.core.errors import StorageError
from hatkit.schemas.config import Head, TrainConfig
from hatkit.schemas.records import CheckpointManifest, TensorEntry
from hatkit.services.toy_model import PARAM_NAMES, ToyModelParams
from hatkit.services.training import make_optimizer
from hatkit.storage.dataset import write_json

logger = logging.getLogger(__name__)

TENSORS_FILE = "tensors.bin"
MANIFEST_FILE = "manifest.json"


@dataclass
class Checkpoint:
    params: ToyModelParams
    manifest: CheckpointManifest
    optimizer_tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def head(self) -> Head:
        return self.manifest.head

    @property
    def epoch(self) -> int:
        return self.manifest.epoch

    def restore_optimizer(self, config: TrainConfig):
        """Optimizer for ``config`` carrying the saved moments when the kinds match."""
        optimizer = make_optimizer(config)
        saved_kind = self.manifest.optimizer.get("kind")
        if saved_kind == optimizer.kind.value:
            optimizer.load_state(self.manifest.optimizer, self.optimizer_tensors)
        elif saved_kind is not None:
            logger.warning(f"Checkpoint optimizer '{saved_kind}' differs from '{optimizer.kind.value}'; starting fresh")
        return optimizer


def save_checkpoint(
    directory: Union[str, Path],
    params: ToyModelParams,
    head: Head,
    seed: int,
    epoch: int,
    optimizer: Optional[Any] = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = [(name, tensor) for name, tensor in params.items()]
    if optimizer is not None:
        tensors += sorted(optimizer.state_tensors().items())

    entries = []
    offset = 0
    with open(directory / TENSORS_FILE, "wb") as f:
        for name, tensor in tensors:
            data = np.ascontiguousarray(tensor, dtype="<f8")
            entries.append(TensorEntry(name=name, shape=list(data.shape), offset=offset))
            f.write(data.tobytes())
            offset += data.nbytes

    manifest = CheckpointManifest(
        dims=params.dims,
        vocab_size=params.vocab_size,
        head=head,
        seed=seed,
        epoch=epoch,
        tensors=entries,
        optimizer=optimizer.state_scalars() if optimizer is not None else {},
    )
    write_json(directory / MANIFEST_FILE, manifest.model_dump(mode="json"))
    logger.info(f"Saved checkpoint (epoch {epoch}) to {directory}")
    return directory


def load_checkpoint(directory: Union[str, Path]) -> Checkpoint:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise StorageError(f"checkpoint manifest not found: {manifest_path}")
    manifest = CheckpointManifest.model_validate(orjson.loads(manifest_path.read_bytes()))
    raw = (directory / TENSORS_FILE).read_bytes()

    tensors: Dict[str, np.ndarray] = {}
    for entry in manifest.tensors:
        count = int(np.prod(entry.shape)) if entry.shape else 1
        end = entry.offset + 8 * count
        if entry.offset < 0 or end > len(raw):
            raise StorageError(f"{directory}: tensor {entry.name} lies outside {TENSORS_FILE}")
        tensors[entry.name] = np.frombuffer(raw[entry.offset:end], dtype="<f8").reshape(entry.shape).astype(np.float64)

    missing = [name for name in PARAM_NAMES if name not in tensors]
    if missing:
        raise StorageError(f"{directory}: checkpoint is missing tensors {missing}")
    params = ToyModelParams(dims=manifest.dims, tensors={n: tensors[n] for n in PARAM_NAMES})
    optimizer_tensors = {n: t for n, t in tensors.items() if n.startswith("opt/")}
    return Checkpoint(params=params, manifest=manifest, optimizer_tensors=optimizer_tensors)
