import numpy as np
import pytest

from hatkit.core.errors import StorageError, UsageError
from hatkit.schemas.config import Head, Optimizer, TrainConfig
from hatkit.schemas.records import DatasetManifest, HypothesisRecord, NBestRecord
from hatkit.services.lm import train_ngram
from hatkit.services.training import train
from hatkit.storage.checkpoint import load_checkpoint, save_checkpoint
from hatkit.storage.config_file import RESOLVED_CONFIG_FILE, load_run_config, write_resolved_config
from hatkit.storage.dataset import read_dataset, write_dataset
from hatkit.storage.lattice_file import read_lattice, write_lattice
from hatkit.storage.lm_file import read_lm, write_lm
from hatkit.storage.nbest_file import read_nbest, write_nbest
from hatkit.storage.tables import METRICS_COLUMNS, metrics_table, read_csv, write_csv


class TestLatticeFile:
    def test_exact_values(self, tmp_path, rng):
        logits = rng.standard_normal((3, 2, 4))
        write_lattice(tmp_path / "z.tlat", logits)
        assert np.array_equal(read_lattice(tmp_path / "z.tlat"), logits)
        assert (tmp_path / "z.tlat").stat().st_size == 24 + 3 * 2 * 4 * 8

    def test_bad_magic(self, tmp_path, rng):
        path = tmp_path / "z.tlat"
        write_lattice(path, rng.standard_normal((1, 1, 2)))
        path.write_bytes(b"XLAT" + path.read_bytes()[4:])
        with pytest.raises(StorageError, match="bad magic"):
            read_lattice(path)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "z.tlat"
        write_lattice(path, rng.standard_normal((2, 2, 2)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(StorageError, match="expected"):
            read_lattice(path)
        path.write_bytes(b"TLAT")
        with pytest.raises(StorageError, match="truncated"):
            read_lattice(path)

    def test_rank_check(self, tmp_path):
        with pytest.raises(StorageError):
            write_lattice(tmp_path / "z.tlat", np.zeros((2, 2)))


class TestDatasetFiles:
    def _manifest(self, dataset):
        return DatasetManifest(
            name=dataset.name, split="train", seed=0, num_utts=len(dataset), vocab_size=3,
            feature_dim=4, T_range=(4, 6), U_range=(1, 3), noise_level=0.3,
        )

    def test_exact_features_and_stable_bytes(self, tmp_path, tiny_dataset):
        write_dataset(tmp_path / "a", tiny_dataset, self._manifest(tiny_dataset))
        write_dataset(tmp_path / "b", tiny_dataset, self._manifest(tiny_dataset))
        loaded = read_dataset(tmp_path / "a")
        for original, restored in zip(tiny_dataset, loaded):
            assert restored.labels == original.labels
            assert np.array_equal(restored.features, original.features)
        for name in ("utterances.jsonl", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(StorageError, match="manifest not found"):
            read_dataset(tmp_path)

    def test_count_mismatch(self, tmp_path, tiny_dataset):
        manifest = self._manifest(tiny_dataset).model_copy(update={"num_utts": 99})
        write_dataset(tmp_path, tiny_dataset, manifest)
        with pytest.raises(StorageError):
            read_dataset(tmp_path)


class TestCheckpoint:
    def test_params_and_adam_state(self, tmp_path, tiny_params, tiny_dataset):
        config = TrainConfig(epochs=1, batch_size=4, eval_beam=2)
        result = train(tiny_params, tiny_dataset, config)
        save_checkpoint(tmp_path, result.params, Head.HAT, seed=0, epoch=1, optimizer=result.optimizer)

        checkpoint = load_checkpoint(tmp_path)
        assert checkpoint.params.equals(result.params)
        assert checkpoint.epoch == 1
        assert checkpoint.head == Head.HAT
        optimizer = checkpoint.restore_optimizer(config)
        assert optimizer.step_count == result.optimizer.step_count
        assert np.array_equal(optimizer.m["joint_w"], result.optimizer.m["joint_w"])

    def test_optimizer_kind_change_starts_fresh(self, tmp_path, tiny_params, tiny_dataset):
        result = train(tiny_params, tiny_dataset, TrainConfig(epochs=1, eval_beam=2))
        save_checkpoint(tmp_path, result.params, Head.HAT, seed=0, epoch=1, optimizer=result.optimizer)
        optimizer = load_checkpoint(tmp_path).restore_optimizer(TrainConfig(optimizer=Optimizer.SGD))
        assert optimizer.step_count == 0

    def test_byte_identical(self, tmp_path, tiny_params):
        for name in ("a", "b"):
            save_checkpoint(tmp_path / name, tiny_params, Head.RNNT, seed=3, epoch=0)
        for name in ("tensors.bin", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing(self, tmp_path):
        with pytest.raises(StorageError):
            load_checkpoint(tmp_path)

    def test_truncated_tensors(self, tmp_path, tiny_params):
        save_checkpoint(tmp_path, tiny_params, Head.HAT, seed=0, epoch=0)
        raw = (tmp_path / "tensors.bin").read_bytes()
        (tmp_path / "tensors.bin").write_bytes(raw[: len(raw) // 2])
        with pytest.raises(StorageError, match="outside"):
            load_checkpoint(tmp_path)


class TestNBestFile:
    def test_read_back(self, tmp_path):
        records = [
            NBestRecord(utt_id="u1", reference=[1, 2], hypotheses=[
                HypothesisRecord(tokens=[1, 2], log_prob=-0.5), HypothesisRecord(tokens=[], log_prob=-3.25),
            ]),
        ]
        write_nbest(tmp_path / "n.jsonl", records)
        assert read_nbest(tmp_path / "n.jsonl") == records

    def test_bad_line(self, tmp_path):
        (tmp_path / "n.jsonl").write_text('{"utt_id": "u1"}\n')
        with pytest.raises(StorageError, match=":1:"):
            read_nbest(tmp_path / "n.jsonl")


class TestLmFile:
    def test_scores_survive(self, tmp_path):
        lm = train_ngram([[1, 2], [1], [2, 1], [2, 2, 1]], vocab_size=2, order=3)
        write_lm(tmp_path / "lm.txt", lm)
        loaded = read_lm(tmp_path / "lm.txt")
        assert loaded.order == 3
        assert set(loaded.tables) == set(lm.tables)
        for tokens in ([1, 2, 1], [2, 2, 2], []):
            state = lm.state_after(tokens)
            assert loaded.score_sequence(tokens) == pytest.approx(lm.score_sequence(tokens), abs=1e-12)
            assert loaded.score_end(state) == pytest.approx(lm.score_end(state), abs=1e-12)

    def test_missing_outcome(self, tmp_path):
        lm = train_ngram([[1, 2]], vocab_size=2)
        write_lm(tmp_path / "lm.txt", lm)
        lines = (tmp_path / "lm.txt").read_text().splitlines()
        (tmp_path / "lm.txt").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(StorageError, match="missing outcomes"):
            read_lm(tmp_path / "lm.txt")

    def test_bad_header(self, tmp_path):
        (tmp_path / "lm.txt").write_text("not json\n")
        with pytest.raises(StorageError):
            read_lm(tmp_path / "lm.txt")


class TestTables:
    def test_metrics_csv(self, tmp_path, tiny_params, tiny_dataset):
        result = train(tiny_params, tiny_dataset, TrainConfig(epochs=2, eval_beam=2))
        table = metrics_table(result.metrics)
        write_csv(table, tmp_path / "metrics.csv")
        loaded = read_csv(tmp_path / "metrics.csv")
        assert list(loaded.columns) == METRICS_COLUMNS
        assert loaded["epoch"].tolist() == [1, 2]


class TestConfigFile:
    def test_defaults_and_overrides(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("train:\n  epochs: 4\n  batch_size: 2\ndecode:\n  beam_size: 3\n")
        config = load_run_config(path, {"train": {"epochs": 7, "batch_size": None}})
        assert config.train.epochs == 7
        assert config.train.batch_size == 2
        assert config.decode.beam_size == 3
        assert config.model.vocab_size == 6

    def test_resolved_config_reloads(self, tmp_path):
        config = load_run_config(None, {"data": {"seed": 9}})
        write_resolved_config(tmp_path, config)
        assert load_run_config(tmp_path / RESOLVED_CONFIG_FILE) == config

    @pytest.mark.parametrize(
        "text, message",
        [("train: [1, 2\n", "cannot parse"), ("- 1\n- 2\n", "mapping"), ("decode:\n  beam_size: 0\n", "invalid")],
    )
    def test_bad_files(self, tmp_path, text, message):
        path = tmp_path / "run.yaml"
        path.write_text(text)
        with pytest.raises(UsageError, match=message):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError, match="not found"):
            load_run_config(tmp_path / "nope.yaml")
