"""Synthetic transduction task.

Each utterance hides a token stream: U label frames at distinct random positions among T
frames, every other frame silent. Features are the one-hot class of each frame over
|V| + 1 channels (channel 0 = silence) plus Gaussian noise, so a linear readout recovers
the stream exactly at noise 0 and the task gets harder as noise grows.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from hatkit.core.errors import SynthError
from hatkit.schemas.config import DataConfig
from hatkit.schemas.vocab import LabelSequence
from hatkit.services.lm import ExternalLm, NgramLm, random_table_lm, sample_sequence, train_ngram

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "eval")

Seed = Union[int, Sequence[int]]


@dataclass
class Utterance:
    utt_id: str
    features: np.ndarray
    labels: LabelSequence

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class Dataset:
    name: str
    vocab_size: int
    utterances: List[Utterance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, index: int) -> Utterance:
        return self.utterances[index]

    @property
    def feature_dim(self) -> int:
        return self.utterances[0].features.shape[1] if self.utterances else self.vocab_size + 1


def _check_ranges(T_range: Tuple[int, int], U_range: Tuple[int, int]) -> None:
    T_lo, T_hi = T_range
    U_lo, U_hi = U_range
    if T_lo < 1 or U_lo < 0 or T_lo > T_hi or U_lo > U_hi or U_hi >= T_lo:
        raise SynthError("invalid ranges")


def frame_classes(T: int, labels: LabelSequence, rng: np.random.Generator) -> np.ndarray:
    """Hidden per-frame classes: labels at sorted distinct frames, 0 elsewhere."""
    classes = np.zeros(T, dtype=np.int64)
    positions = np.sort(rng.choice(T, size=len(labels), replace=False))
    classes[positions] = labels
    return classes


def synth_task(
    seed: Seed,
    num_utts: int,
    T_range: Tuple[int, int],
    U_range: Tuple[int, int],
    vocab_size: int,
    noise_level: float,
    label_sampler: Optional[ExternalLm] = None,
    name: str = "synth",
) -> Dataset:
    """Deterministic synthetic dataset; references follow ``label_sampler`` when given."""
    _check_ranges(T_range, U_range)
    if vocab_size < 1:
        raise SynthError("vocab_size must be >= 1")
    if noise_level < 0:
        raise SynthError("noise_level must be >= 0")
    if label_sampler is not None and label_sampler.vocab_size != vocab_size:
        raise SynthError("label sampler vocabulary does not match vocab_size")

    rng = np.random.default_rng(seed)
    eye = np.eye(vocab_size + 1)
    utterances = []
    for i in range(num_utts):
        T = int(rng.integers(T_range[0], T_range[1] + 1))
        U = int(rng.integers(U_range[0], U_range[1] + 1))
        if label_sampler is None:
            labels = tuple(int(k) for k in rng.integers(1, vocab_size + 1, size=U))
        else:
            labels = sample_sequence(label_sampler, rng, max_len=U, length=U)
        classes = frame_classes(T, labels, rng)
        features = eye[classes] + noise_level * rng.standard_normal((T, vocab_size + 1))
        utterances.append(Utterance(utt_id=f"{name}-{i:05d}", features=features, labels=labels))
    logger.debug(f"Generated {num_utts} utterances for '{name}' (seed={seed})")
    return Dataset(name=name, vocab_size=vocab_size, utterances=utterances)


@dataclass
class SyntheticCorpus:
    config: DataConfig
    splits: Dict[str, Dataset]
    domain_lm: Optional[ExternalLm] = None
    external_lm: Optional[NgramLm] = None


def generate_corpus(config: DataConfig) -> SyntheticCorpus:
    """train/dev/eval splits plus, with ``domain_lm``, an n-gram LM trained on text only.

    The text corpus is drawn from the same domain LM that generates the references, but
    with its own random stream, so the external LM never sees the test transcripts.
    """
    _check_ranges(config.T_range, config.U_range)
    domain = random_table_lm(config.vocab_size, config.seed, config.domain_sharpness) if config.domain_lm else None
    sizes = {"train": config.num_train, "dev": config.num_dev, "eval": config.num_eval}
    splits = {
        split: synth_task(
            seed=(config.seed, index),
            num_utts=sizes[split],
            T_range=config.T_range,
            U_range=config.U_range,
            vocab_size=config.vocab_size,
            noise_level=config.noise_level,
            label_sampler=domain,
            name=split,
        )
        for index, split in enumerate(SPLITS)
    }

    external = None
    if domain is not None:
        rng = np.random.default_rng((config.seed, len(SPLITS)))
        text = [
            sample_sequence(domain, rng, max_len=config.U_range[1],
                            length=int(rng.integers(config.U_range[0], config.U_range[1] + 1)))
            for _ in range(config.lm_corpus_size)
        ]
        external = train_ngram(text, config.vocab_size, order=config.lm_order, alpha=config.lm_alpha)

    logger.info(
        "Generated synthetic corpus: "
        + ", ".join(f"{split}={len(ds)}" for split, ds in splits.items())
        + (" with domain LM" if domain is not None else "")
    )
    return SyntheticCorpus(config=config, splits=splits, domain_lm=domain, external_lm=external)
