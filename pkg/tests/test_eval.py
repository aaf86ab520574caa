import csv

import numpy as np
import pytest

from rollgan.classify import BandOracle, ClassifierSpec, evaluate, featurize, fit
from rollgan.dataset import GenreLabel, make_synthetic, split, stack
from rollgan.errors import EmptyTestSet, InvalidThreshold, LayoutMismatch
from rollgan.evaluation import (
    EvalReport,
    EvalRow,
    TransferTask,
    build_report,
    transfer_accuracy,
    transfer_rolls,
)
from rollgan.nets import DiscriminatorConfig, GeneratorConfig, ModelConfig, TransferModel
from rollgan.pianoroll_io import read_midi, rolls_to_midi, song_to_rolls


@pytest.fixture(scope="module")
def corpus():
    return split(make_synthetic(20, seed=3), 0.5, seed=0)


def shift(rows):
    """Generator stand-in moving every note ``rows`` pitches (wrapping around)."""
    return lambda x: np.roll(np.asarray(x), rows, axis=-1)


def identity(x):
    return np.asarray(x)


def test_task_properties():
    t = TransferTask("j2c")
    assert (t.source, t.target, t.direction) == (GenreLabel.JAZZ, GenreLabel.CLASSIC, "A2B")
    c = TransferTask.C2J
    assert (c.source, c.target, c.direction) == (GenreLabel.CLASSIC, GenreLabel.JAZZ, "B2A")


class TestTransferAccuracy:
    def test_identity_never_transfers(self, corpus):
        oracle = BandOracle()
        assert transfer_accuracy(identity, oracle, corpus.test_a, "j2c") == 0.0
        assert transfer_accuracy(identity, oracle, corpus.test_b, "c2j") == 0.0

    def test_band_swap_always_transfers(self, corpus):
        # the two genre bands sit 36 pitches apart
        oracle = BandOracle()
        assert transfer_accuracy(shift(36), oracle, corpus.test_a, "j2c") == 100.0
        assert transfer_accuracy(shift(-36), oracle, corpus.test_b, TransferTask.C2J) == 100.0

    def test_partial_by_hand(self, corpus):
        rolls = np.stack([s.roll for s in corpus.test_a])
        moved = {0, 3, 4}

        def gen(x):
            out = np.array(x)
            for i in range(len(out)):
                if i in moved:
                    out[i] = np.roll(out[i], 36, axis=-1)
            return out

        expected = 100.0 * len(moved) / len(rolls)
        assert transfer_accuracy(gen, BandOracle(), rolls, "j2c") == pytest.approx(expected)

    def test_threshold(self, corpus):
        rolls = np.stack([s.roll for s in corpus.test_a])

        def faint(x):
            # full-strength source notes plus 0.6-level copies in the upper band
            x = np.asarray(x, dtype=np.float32)
            return np.maximum(x, 0.6 * np.roll(x, 36, axis=-1))

        # at 0.5 both bands are equally full and the tie goes to Classic; at 0.7 the copies vanish
        oracle = BandOracle(tie_label=GenreLabel.CLASSIC)
        assert transfer_accuracy(faint, oracle, rolls, "j2c") == 100.0
        assert transfer_accuracy(faint, oracle, rolls, "j2c", threshold=0.7) == 0.0
        with pytest.raises(InvalidThreshold):
            transfer_accuracy(faint, oracle, rolls, "j2c", threshold=1.0)

    def test_empty(self):
        with pytest.raises(EmptyTestSet):
            transfer_accuracy(identity, BandOracle(), np.zeros((0, 64, 84)), "j2c")

    def test_wrong_source_genre(self, corpus):
        with pytest.raises(ValueError, match="Jazz"):
            transfer_accuracy(identity, BandOracle(), corpus.test_b, "j2c")

    def test_layout_mismatch(self, corpus):
        g = np.random.default_rng(0)
        clf = fit(ClassifierSpec("nb"), g.integers(0, 2, (10, 12)),
                  [GenreLabel.JAZZ, GenreLabel.CLASSIC] * 5)
        with pytest.raises(LayoutMismatch):
            transfer_accuracy(identity, clf, corpus.test_a, "j2c")

    def test_batching_is_invisible(self, rng):
        x = rng.random((7, 64, 84))
        np.testing.assert_array_equal(transfer_rolls(identity, x, batch_size=2),
                                      transfer_rolls(identity, x, batch_size=64))
        assert transfer_rolls(identity, x).dtype == np.uint8

    def test_genuine_target_rolls_score_the_judge(self, corpus):
        # a "generator" that hands back real Classic rolls scores exactly the judge's Classic accuracy
        g = np.random.default_rng(0)
        train = corpus.train_a + corpus.train_b
        labels = [s.label if g.random() > 0.3 else GenreLabel.JAZZ for s in train]
        judge = fit(ClassifierSpec("knn"), featurize(stack(train)), labels)
        target = stack(corpus.test_b)
        per_genre = evaluate(judge, featurize(target), [GenreLabel.CLASSIC] * len(target)).overall
        acc = transfer_accuracy(lambda x: target[:len(x)], judge, corpus.test_a, "j2c")
        assert acc == per_genre and 0 < acc < 100

    def test_order_invariant(self, corpus):
        rolls = stack(corpus.test_a)
        gen = lambda x: np.where(np.arange(84) % 3 == 0, 0.9, 0.0) * np.asarray(x).any(axis=-1, keepdims=True)
        base = transfer_accuracy(gen, BandOracle(), rolls, "j2c")
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(len(rolls))
            assert transfer_accuracy(gen, BandOracle(), rolls[perm], "j2c") == base

    def test_recount_through_midi_files(self, corpus, tmp_path):
        small = ModelConfig(GeneratorConfig("resnet9", 4, 1), DiscriminatorConfig(4))
        gen = TransferModel(small, seed=2).eval().g_a2b
        rolls = stack(corpus.test_a)
        out = transfer_rolls(gen, rolls)
        (tmp_path / "t.mid").write_bytes(rolls_to_midi(list(out)))
        back = np.stack(song_to_rolls(read_midi(tmp_path / "t.mid")))
        verdicts = BandOracle().predict(featurize(back))
        recount = 100.0 * sum(v is GenreLabel.CLASSIC for v in verdicts) / len(verdicts)
        assert recount == transfer_accuracy(gen, BandOracle(), rolls, "j2c")


class TestReport:
    def test_render_and_csv(self, tmp_path):
        report = EvalReport("oracle", [EvalRow("base", TransferTask.J2C, 12.5, 8),
                                       EvalRow("base", TransferTask.C2J, 100.0, 8),
                                       EvalRow("full", TransferTask.J2C, 50.0, 8)])
        text = report.render()
        assert "judge: oracle" in text and "J2C Acc (%)" in text and "C2J Acc (%)" in text
        lines = text.splitlines()
        assert any(l.startswith("base") and "12.5" in l and "100.0" in l for l in lines)
        assert any(l.startswith("full") and l.rstrip().endswith("-") for l in lines)
        report.to_csv(tmp_path / "r.csv")
        with open(tmp_path / "r.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [(r["variant"], r["task"], float(r["accuracy"])) for r in rows] == [
            ("base", "j2c", 12.5), ("base", "c2j", 100.0), ("full", "j2c", 50.0)]
        assert report.accuracy("full", "j2c") == 50.0
        with pytest.raises(KeyError):
            report.accuracy("full", "c2j")

    def test_build_report_matches_direct_calls(self, corpus):
        small = ModelConfig(GeneratorConfig("resnet9", 4, 1), DiscriminatorConfig(4))
        model = TransferModel(small, seed=0).eval()
        tasks = {TransferTask.J2C: corpus.test_a, TransferTask.C2J: corpus.test_b}
        report = build_report({"tiny": model, "swap": shift(36)}, BandOracle(), tasks)
        assert report.variants == ["tiny", "swap"] and report.judge == "oracle"
        assert report.accuracy("tiny", "j2c") == transfer_accuracy(model.g_a2b, BandOracle(),
                                                                   corpus.test_a, "j2c")
        assert report.accuracy("tiny", "c2j") == transfer_accuracy(model.g_b2a, BandOracle(),
                                                                   corpus.test_b, "c2j")
        assert report.accuracy("swap", "j2c") == 100.0
        assert all(r.n == len(corpus.test_a) for r in report.rows)

    def test_identical_weights_identical_rows(self, corpus):
        small = ModelConfig(GeneratorConfig("resnet9", 4, 1), DiscriminatorConfig(4))
        a, b = TransferModel(small, seed=1).eval(), TransferModel(small, seed=1).eval()
        report = build_report({"a": a, "b": b}, BandOracle(), {"j2c": corpus.test_a, "c2j": corpus.test_b})
        assert [(r.task, r.accuracy) for r in report.rows if r.variant == "a"] == \
            [(r.task, r.accuracy) for r in report.rows if r.variant == "b"]
