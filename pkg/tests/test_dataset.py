import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rollgan.dataset import (
    DomainSplit,
    GenreLabel,
    LabeledSample,
    make_synthetic,
    read_manifest,
    sample_domain,
    sample_mixed,
    samples_from_rolls,
    split,
    stack,
    write_manifest,
)
from rollgan.errors import EmptyDomain, EmptyGenre, InvalidCount, NonBinaryRoll

ZERO = np.zeros((64, 84), dtype=np.uint8)


def _samples(n_jazz, n_classic):
    return (samples_from_rolls([ZERO] * n_jazz, GenreLabel.JAZZ)
            + samples_from_rolls([ZERO] * n_classic, GenreLabel.CLASSIC))


def _ids(xs):
    return [s.source_id for s in xs]


class TestSplit:
    def test_stratified_and_deterministic(self):
        data = _samples(100, 100)
        a, b = split(data, 0.2, seed=7), split(data, 0.2, seed=7)
        assert (len(a.train_a), len(a.test_a), len(a.train_b), len(a.test_b)) == (80, 20, 80, 20)
        assert a.manifest() == b.manifest()

    def test_half_of_two(self):
        s = split(_samples(2, 2), 0.5, seed=0)
        assert (len(s.train_a), len(s.test_a), len(s.train_b), len(s.test_b)) == (1, 1, 1, 1)

    def test_disjoint_and_labeled(self):
        s = split(_samples(30, 17), 0.3, seed=1)
        ids = _ids(s.train_a + s.test_a + s.train_b + s.test_b)
        assert len(ids) == len(set(ids)) == 47
        assert all(x.label is GenreLabel.JAZZ for x in s.train_a + s.test_a)
        assert all(x.label is GenreLabel.CLASSIC for x in s.train_b + s.test_b)
        assert len(s.mixed) == len(s.train_a) + len(s.train_b)

    def test_seed_changes_membership(self):
        # two independent 20-of-100 draws coincide with probability 1 / C(100, 20)
        data = _samples(100, 100)
        tests = {tuple(_ids(split(data, 0.2, seed=s).test_a)) for s in range(100)}
        assert len(tests) == 100
        # every sample lands in test about 20% of the time across seeds
        counts = np.zeros(100)
        for s in range(100):
            for sid in _ids(split(data, 0.2, seed=s).test_a):
                counts[int(sid.split(":")[1])] += 1
        assert counts.mean() == 20 and counts.max() < 45

    def test_missing_genre(self):
        with pytest.raises(EmptyGenre):
            split(_samples(3, 0), 0.5)

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.5])
    def test_bad_fraction(self, f):
        with pytest.raises(ValueError):
            split(_samples(3, 3), f)

    def test_manifest_file(self, tmp_path):
        s = split(_samples(5, 4), 0.4, seed=3)
        write_manifest(s, tmp_path / "m.txt")
        back = read_manifest(tmp_path / "m.txt")
        assert back["seed"] == ["3"]
        assert {k: v for k, v in back.items() if k != "seed"} == s.manifest()


class TestSamplers:
    def test_singleton_domain(self, rng):
        s = split(_samples(2, 2), 0.5, seed=0)
        assert sample_domain(s, "A", 1, rng)[0] is s.train_a[0]

    def test_uniformity_domain(self):
        s = split(_samples(3, 2), 0.34, seed=0)
        assert len(s.train_a) == 2
        draws = sample_domain(s, "A", 1000, np.random.default_rng(0))
        freq = sum(d is s.train_a[0] for d in draws) / 1000
        assert 0.45 <= freq <= 0.55

    def test_replay(self):
        s = split(_samples(10, 10), 0.2, seed=0)
        a = sample_domain(s, "B", 50, np.random.default_rng(5))
        b = sample_domain(s, "B", 50, np.random.default_rng(5))
        assert _ids(a) == _ids(b)

    def test_mixed_with_single_jazz(self, rng):
        jazz = samples_from_rolls([ZERO], GenreLabel.JAZZ)[0]
        s = DomainSplit((jazz,), (), (), ())
        assert all(x is jazz for x in sample_mixed(s, 20, rng))

    def test_mixed_uniformity(self):
        s = split(_samples(51, 51), 0.02, seed=0)
        draws = sample_mixed(s, 2000, np.random.default_rng(1))
        frac = sum(x.label is GenreLabel.JAZZ for x in draws) / 2000
        assert 0.45 <= frac <= 0.55

    def test_zero_count(self, rng):
        s = split(_samples(2, 2), 0.5, seed=0)
        with pytest.raises(InvalidCount):
            sample_mixed(s, 0, rng)
        with pytest.raises(InvalidCount):
            sample_domain(s, "A", 0, rng)

    def test_empty_domain(self, rng):
        s = DomainSplit((), (), samples_from_rolls([ZERO], GenreLabel.CLASSIC), ())
        with pytest.raises(EmptyDomain):
            sample_domain(s, "A", 1, rng)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 20), st.integers(2, 20), st.integers(0, 1000))
    def test_never_returns_test_samples(self, na, nb, seed):
        s = split(_samples(na, nb), 0.5, seed=seed)
        test_ids = set(_ids(s.test_a + s.test_b))
        rng = np.random.default_rng(seed)
        drawn = sample_domain(s, "A", 30, rng) + sample_domain(s, "B", 30, rng) + sample_mixed(s, 30, rng)
        assert not test_ids & set(_ids(drawn))


class TestSynthetic:
    def test_genre_a_stays_low(self):
        a = next(x for x in make_synthetic(1, seed=0) if x.label is GenreLabel.JAZZ)
        assert not a.roll[:, 42:].any()

    def test_shapes_and_binary(self):
        data = make_synthetic(20, seed=4)
        assert len(data) == 40
        for x in data:
            assert x.roll.shape == (64, 84) and x.roll.dtype == np.uint8
            assert set(np.unique(x.roll)) <= {0, 1} and x.roll.any()

    def test_deterministic(self):
        a, b = make_synthetic(5, seed=9), make_synthetic(5, seed=9)
        np.testing.assert_array_equal(stack(a), stack(b))
        assert not np.array_equal(stack(a), stack(make_synthetic(5, seed=10)))

    def test_rhythm_profiles(self):
        data = make_synthetic(50, seed=1)
        for x in data:
            onsets = np.flatnonzero(np.diff(np.vstack([ZERO[:1], x.roll]), axis=0).max(axis=1) > 0)
            phase = 2 if x.label is GenreLabel.JAZZ else 0
            assert all(t % 4 == phase for t in onsets)

    def test_stump_on_mean_row_separates(self):
        data = make_synthetic(200, seed=0)
        feature = np.array([np.nonzero(x.roll)[1].mean() for x in data])
        y = np.array([x.label is GenreLabel.CLASSIC for x in data])
        # best single threshold over all midpoints
        cands = np.unique(feature)
        best = max(((feature > t) == y).mean() for t in (cands[:-1] + cands[1:]) / 2)
        assert best == 1.0


def test_labeled_sample_requires_binary():
    with pytest.raises(NonBinaryRoll):
        LabeledSample(np.full((64, 84), 0.5), GenreLabel.JAZZ, "x")


def test_genre_parse():
    assert GenreLabel.parse(" jazz ") is GenreLabel.JAZZ
    with pytest.raises(ValueError):
        GenreLabel.parse("pop")
