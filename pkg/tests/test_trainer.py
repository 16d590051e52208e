"""Example sampling bounds, optimization behavior, determinism, checkpoints."""

import math

import numpy as np
import pytest

from lacuna.autodiff import AdamState, RngState
from lacuna.checkpoint import load_checkpoint
from lacuna.corpus import CleanRecord
from lacuna.model import ModelConfig, init_model
from lacuna.trainer import (
    TrainConfig,
    TrainingExample,
    fit,
    sample_training_example,
    train_step,
)
from synth import make_plain_corpus

LONG_TEXT = CleanRecord(1, "αβγδε ζηθικ " * 200, "train")


class TestSampling:
    def test_bounds_hold_over_many_samples(self):
        rng = RngState(0)
        for _ in range(10_000):
            ex = sample_training_example(LONG_TEXT, rng)
            assert ex is not None
            assert 100 <= len(ex.context) <= 1000
            assert 1 <= ex.gap_len <= 10
            assert 0 <= ex.gap_start <= len(ex.context) - ex.gap_len

    def test_mask_matches_gap_exactly(self):
        rng = RngState(1)
        for _ in range(200):
            ex = sample_training_example(LONG_TEXT, rng)
            masked = ex.masked
            for i, ch in enumerate(masked):
                in_gap = ex.gap_start <= i < ex.gap_start + ex.gap_len
                assert (ch == "?") == in_gap
            assert ex.target == ex.context[ex.gap_start : ex.gap_start + ex.gap_len]
            assert "?" not in ex.target

    def test_context_is_whole_record_at_minimum_length(self):
        record = CleanRecord(2, "α" * 100, "train")
        ex = sample_training_example(record, RngState(3))
        assert ex.context == record.text

    def test_target_never_overlaps_missing_marks(self):
        text = ("αβγ" + "-" * 17) * 10  # heavily damaged record
        record = CleanRecord(3, text, "train")
        rng = RngState(4)
        for _ in range(500):
            ex = sample_training_example(record, rng)
            if ex is None:
                continue
            assert "-" not in ex.target

    def test_short_record_skipped(self):
        assert sample_training_example(CleanRecord(4, "α" * 99, "train"), RngState(0)) is None

    def test_all_missing_record_skipped(self):
        assert sample_training_example(CleanRecord(5, "-" * 150, "train"), RngState(0)) is None


@pytest.fixture(scope="module")
def tiny_setup():
    corpus, alphabet, vocab = make_plain_corpus(n_records=30, seed=7)
    config = ModelConfig(
        "bi-word", alphabet_size=len(alphabet), word_vocab_size=len(vocab),
        hidden=12, char_embed=8, word_embed=6, dropout=0.1,
    )
    return corpus, alphabet, vocab, config


class TestTrainStep:
    def test_overfits_one_repeated_example(self, tiny_setup):
        corpus, alphabet, vocab, config = tiny_setup
        config = ModelConfig(**{**config.to_dict(), "dropout": 0.0})
        params = init_model(config, RngState(8))
        opt = AdamState.for_params(params, lr=1e-2)
        tconf = TrainConfig(batch_size=1, scheduled_p=0.0, dropout=0.0, lr=1e-2)
        record = corpus["train"][0]
        ex = TrainingExample(record.text[:100], gap_start=40, gap_len=3)
        rng = RngState(9)
        loss = math.inf
        for step in range(250):
            stats = train_step([ex], params, opt, config, tconf, alphabet, vocab, rng, step)
            loss = stats.loss
            if loss < 0.005:
                break
        assert loss < 0.01

    def test_reported_grad_norm_is_post_clip(self, tiny_setup):
        corpus, alphabet, vocab, config = tiny_setup
        params = init_model(config, RngState(10))
        opt = AdamState.for_params(params, lr=1e-3)
        tconf = TrainConfig(batch_size=4, clip=5.0)
        rng = RngState(11)
        examples = []
        sampler_rng = RngState(12)
        while len(examples) < 4:
            ex = sample_training_example(corpus["train"][0], sampler_rng)
            if ex:
                examples.append(ex)
        stats = train_step(examples, params, opt, config, tconf, alphabet, vocab, rng)
        assert stats.grad_norm <= 5.0 + 1e-9
        assert stats.grad_norm == pytest.approx(min(stats.grad_norm_preclip, 5.0))


class TestFit:
    def small_train_config(self, **kwargs):
        defaults = dict(
            batch_size=4, max_steps=12, ckpt_every=6, seed=5, lr=2e-3,
            scheduled_p=0.5, dropout=0.1, val_max_records=3, val_beam_width=3,
        )
        defaults.update(kwargs)
        return TrainConfig(**defaults)

    def test_zero_steps_emits_only_initial_checkpoint(self, tiny_setup, tmp_path):
        corpus, alphabet, vocab, config = tiny_setup
        result = fit(corpus, ModelConfig(**config.to_dict()), self.small_train_config(max_steps=0),
                     alphabet, vocab, tmp_path)
        assert result.last_path is not None
        assert load_checkpoint(result.last_path).step == 0
        assert result.loss_trace == []

    def test_same_seed_identical_loss_traces(self, tiny_setup, tmp_path):
        corpus, alphabet, vocab, config = tiny_setup
        traces = []
        for run in range(2):
            result = fit(
                corpus, ModelConfig(**config.to_dict()), self.small_train_config(),
                alphabet, vocab, tmp_path / f"run{run}",
            )
            traces.append(result.loss_trace)
        assert traces[0] == traces[1]

    def test_checkpoint_reload_reproduces_validation(self, tiny_setup, tmp_path):
        from lacuna.beam import BeamConfig
        from lacuna.evaluator import evaluate

        corpus, alphabet, vocab, config = tiny_setup
        result = fit(corpus, ModelConfig(**config.to_dict()), self.small_train_config(),
                     alphabet, vocab, tmp_path)
        ckpt = load_checkpoint(result.last_path)
        reloaded_config = ModelConfig.from_dict(ckpt.config)
        beam = BeamConfig(width=3, top_k=3)
        a = evaluate(corpus["valid"], ckpt.params, reloaded_config, ckpt.alphabet,
                     ckpt.word_vocab, beam=beam, seed=5, max_records=3)
        b = evaluate(corpus["valid"], ckpt.params, reloaded_config, ckpt.alphabet,
                     ckpt.word_vocab, beam=beam, seed=5, max_records=3)
        assert a.cer == b.cer and a.top20 == b.top20

    def test_validation_cer_improves_from_first_to_best(self, tmp_path):
        from lacuna.checkpoint import load_checkpoint

        corpus, alphabet, vocab = make_plain_corpus(n_records=60, seed=3)
        config = ModelConfig(
            "bi-word", alphabet_size=len(alphabet), word_vocab_size=len(vocab),
            hidden=16, char_embed=12, word_embed=8, dropout=0.1,
        )
        tconf = TrainConfig(batch_size=8, lr=3e-3, scheduled_p=0.5, dropout=0.1,
                            max_steps=150, ckpt_every=75, seed=1,
                            val_max_records=6, val_beam_width=5)
        result = fit(corpus, config, tconf, alphabet, vocab, tmp_path)
        first = result.validation[0].cer
        best = min(point.cer for point in result.validation)
        assert best < first, f"validation CER never improved: first {first}, best {best}"
        assert load_checkpoint(result.best_path).step > 0

    def test_log_file_is_line_delimited_json(self, tiny_setup, tmp_path):
        import json

        corpus, alphabet, vocab, config = tiny_setup
        fit(corpus, ModelConfig(**config.to_dict()), self.small_train_config(max_steps=3, ckpt_every=3),
            alphabet, vocab, tmp_path)
        lines = [json.loads(l) for l in (tmp_path / "train_log.jsonl").read_text().splitlines()]
        steps = [l for l in lines if l["event"] == "step"]
        assert len(steps) == 3
        assert all({"step", "loss", "grad_norm"} <= set(l) for l in steps)
        assert any(l["event"] == "validation" for l in lines)
