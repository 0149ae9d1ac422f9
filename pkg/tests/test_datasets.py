"""Noise injection, labeling, dataset generation, splitting, serialization."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seabedbench.datasets import (
    DatasetError,
    KIND_COMPLEX20,
    KIND_REAL,
    LabeledDataset,
    NoiseError,
    NoiseSpec,
    add_noise,
    clean_lowfreq_fields,
    encode_for_learners,
    generate_backscatter_dataset,
    generate_lowfreq_dataset,
    label_by_soundspeed,
    load,
    sample_seed,
    save,
    split,
    to_csv,
)
from seabedbench.environments import CLASS_SOUND_SPEEDS, SedimentClass


class TestAddNoise:
    def test_none_sentinel_returns_signal(self):
        s = np.array([1.0 + 1j, 2.0 - 0.5j])
        out = add_noise(s, NoiseSpec(None, "complex-circular", 0))
        assert np.array_equal(out, s)
        assert out is not s

    def test_zero_signal_rejected(self):
        with pytest.raises(NoiseError):
            add_noise(np.zeros(4, complex), NoiseSpec(10.0, "complex-circular", 0))

    def test_expected_power_at_zero_db(self):
        rng = np.random.default_rng(5)
        s = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        s /= np.linalg.norm(s)          # ||s||^2 = 1
        powers = []
        for seed in range(4000):
            noisy = add_noise(s, NoiseSpec(0.0, "complex-circular", seed))
            powers.append(np.sum(np.abs(noisy - s) ** 2))
        assert np.mean(powers) == pytest.approx(1.0, rel=0.05)

    def test_empirical_snr_complex(self):
        s = np.ones(20) + 0.3j
        target = 12.0
        ratio = _empirical_snr(s, NoiseSpec(target, "complex-circular", 0), draws=3000)
        assert abs(ratio - target) < 0.2

    def test_empirical_snr_real(self):
        s = np.linspace(0.5, 2.0, 64)
        target = 7.0
        ratio = _empirical_snr(s, NoiseSpec(target, "real", 0), draws=3000)
        assert abs(ratio - target) < 0.2

    def test_real_noise_stays_real(self):
        out = add_noise(np.ones(8), NoiseSpec(5.0, "real", 3))
        assert out.dtype == np.float64

    def test_deterministic_by_seed(self):
        s = np.ones(8) + 0j
        a = add_noise(s, NoiseSpec(6.0, "complex-circular", 11))
        b = add_noise(s, NoiseSpec(6.0, "complex-circular", 11))
        assert np.array_equal(a, b)

    def test_bad_kind(self):
        with pytest.raises(NoiseError):
            NoiseSpec(3.0, "uniform", 0)

    def test_noise_independence_between_samples(self):
        s = np.ones(20) + 0j
        draws = np.stack([add_noise(s, NoiseSpec(0.0, "complex-circular", seed)) - s
                          for seed in range(400)])
        flat = np.concatenate([draws.real, draws.imag], axis=1)
        rng = np.random.default_rng(0)
        corrs = []
        for _ in range(10_000):
            i, j = rng.integers(400, size=2)
            if i == j:
                continue
            corrs.append(np.corrcoef(flat[i], flat[j])[0, 1])
        assert abs(np.mean(corrs)) < 0.05


def _empirical_snr(signal, spec, draws):
    signal_power = np.sum(np.abs(signal) ** 2)
    noise_power = 0.0
    for seed in range(draws):
        noisy = add_noise(signal, NoiseSpec(spec.snr_db, spec.kind, seed))
        noise_power += np.sum(np.abs(noisy - signal) ** 2)
    return 10 * math.log10(signal_power * draws / noise_power)


class TestLabeling:
    def test_catalog_examples(self):
        assert label_by_soundspeed(1501.57) is SedimentClass.CLAY
        assert label_by_soundspeed(1800.0) is SedimentClass.GRAVEL
        assert label_by_soundspeed(1725.0) is SedimentClass.SAND   # tie breaks low

    def test_midpoint_ties_break_low(self):
        for lo, hi in zip(SedimentClass, list(SedimentClass)[1:]):
            mid = 0.5 * (CLASS_SOUND_SPEEDS[lo] + CLASS_SOUND_SPEEDS[hi])
            assert label_by_soundspeed(mid) is lo

    @given(st.floats(1.0, 3000.0))
    def test_always_the_nearest_class(self, c):
        got = label_by_soundspeed(c)
        best = min(abs(c - s) for s in CLASS_SOUND_SPEEDS)
        assert abs(c - CLASS_SOUND_SPEEDS[got]) == best

    def test_positive_required(self):
        with pytest.raises(ValueError):
            label_by_soundspeed(0.0)


@pytest.fixture(scope="module")
def small():
    return generate_lowfreq_dataset("training", 12, 18.0, master_seed=99)


class TestLowFreqGeneration:
    def test_balanced_and_shaped(self, small):
        assert len(small) == 48
        assert np.array_equal(small.class_counts(), [12, 12, 12, 12])
        assert small.kind == KIND_COMPLEX20
        assert small.features.shape == (48, 20)

    def test_deterministic(self, small):
        again = generate_lowfreq_dataset("training", 12, 18.0, master_seed=99)
        assert np.array_equal(again.features, small.features)
        assert np.array_equal(again.sample_seeds, small.sample_seeds)

    def test_label_provenance_consistency(self, small):
        for i in range(len(small)):
            assert label_by_soundspeed(small.c_tops[i]).value == small.labels[i]

    def test_master_seed_changes_noise(self):
        a = generate_lowfreq_dataset("training", 4, 18.0, master_seed=1)
        b = generate_lowfreq_dataset("training", 4, 18.0, master_seed=2)
        assert not np.array_equal(a.features, b.features)

    def test_clean_fields_reused(self, small):
        cleans = clean_lowfreq_fields("training")
        again = generate_lowfreq_dataset("training", 12, 18.0, master_seed=99,
                                         clean_fields=cleans)
        assert np.array_equal(again.features, small.features)

    def test_sample_seed_is_order_free(self):
        assert sample_seed(5, "training", 2, 7) == sample_seed(5, "training", 2, 7)
        assert sample_seed(5, "training", 2, 7) != sample_seed(5, "training", 2, 8)
        assert sample_seed(5, 3, 2, 7) != sample_seed(5, 4, 2, 7)


class TestEncoding:
    def test_scale_and_phase_invariance(self):
        ds = generate_lowfreq_dataset("training", 3, 18.0, master_seed=7)
        base = encode_for_learners(ds)
        from dataclasses import replace
        rotated = replace(ds, features=ds.features * (2.5 * np.exp(1j * 1.234)))
        enc = encode_for_learners(rotated)
        assert np.allclose(enc, base, atol=1e-12)

    def test_dimensions(self):
        ds = generate_lowfreq_dataset("training", 2, None, master_seed=7)
        assert encode_for_learners(ds).shape == (8, 40)


class TestSplit:
    def _dataset(self, per_class=25, dims=6, seed=0):
        rng = np.random.default_rng(seed)
        n = per_class * 4
        return LabeledDataset(
            kind=KIND_REAL, features=rng.standard_normal((n, dims)),
            labels=np.repeat(np.arange(4, dtype=np.uint8), per_class),
            pipeline="backscatter", set_id="training", snr_db=None, master_seed=seed,
            sample_seeds=np.arange(n, dtype=np.uint64),
            c_tops=np.repeat(np.array(CLASS_SOUND_SPEEDS), per_class),
            thicknesses=np.full(n, 0.5))

    def test_balanced_80_20(self):
        train, hold = split(self._dataset(25), 0.2, seed=1)
        assert len(train) == 80 and len(hold) == 20
        assert np.array_equal(train.class_counts(), [20] * 4)
        assert np.array_equal(hold.class_counts(), [5] * 4)
        overlap = set(train.sample_seeds) & set(hold.sample_seeds)
        assert not overlap

    def test_deterministic(self):
        a1, b1 = split(self._dataset(10), 0.5, seed=3)
        a2, b2 = split(self._dataset(10), 0.5, seed=3)
        assert np.array_equal(a1.features, a2.features)
        assert np.array_equal(b1.features, b2.features)

    def test_unbalanced_proportions(self):
        ds = self._dataset(20)
        from dataclasses import replace
        keep = np.concatenate([np.nonzero(ds.labels == c)[0][: (20 if c < 2 else 10)]
                               for c in range(4)])
        ds = replace(ds, features=ds.features[keep], labels=ds.labels[keep],
                     sample_seeds=ds.sample_seeds[keep], c_tops=ds.c_tops[keep],
                     thicknesses=ds.thicknesses[keep])
        train, hold = split(ds, 0.25, seed=0)
        assert np.array_equal(hold.class_counts(), [5, 5, 2, 2])  # rounded

    def test_tiny_class_rejected(self):
        ds = self._dataset(1)
        with pytest.raises(DatasetError):
            split(ds, 0.5, seed=0)

    def test_fraction_bounds(self):
        with pytest.raises(DatasetError):
            split(self._dataset(10), 1.0, seed=0)


class TestSerialization:
    def test_round_trip_lowfreq(self, tmp_path):
        ds = generate_lowfreq_dataset("training", 3, 12.0, master_seed=4)
        p = tmp_path / "d.sbds"
        save(ds, p)
        back = load(p)
        assert back.kind == ds.kind
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.sample_seeds, ds.sample_seeds)
        assert back.snr_db == ds.snr_db
        assert back.set_id == ds.set_id

    def test_round_trip_none_snr(self, tmp_path):
        ds = generate_lowfreq_dataset("training", 2, None, master_seed=4)
        p = tmp_path / "d.sbds"
        save(ds, p)
        assert load(p).snr_db is None

    def test_corruption_detected(self, tmp_path):
        ds = generate_lowfreq_dataset("training", 2, 12.0, master_seed=4)
        p = tmp_path / "d.sbds"
        save(ds, p)
        blob = bytearray(p.read_bytes())
        blob[100] ^= 0xFF
        p.write_bytes(bytes(blob))
        with pytest.raises(DatasetError, match="checksum"):
            load(p)

    def test_truncation_detected(self, tmp_path):
        ds = generate_lowfreq_dataset("training", 2, 12.0, master_seed=4)
        p = tmp_path / "d.sbds"
        save(ds, p)
        p.write_bytes(p.read_bytes()[:50])
        with pytest.raises(DatasetError):
            load(p)

    def test_kind_mismatch(self, tmp_path):
        ds = generate_lowfreq_dataset("training", 2, 12.0, master_seed=4)
        p = tmp_path / "d.sbds"
        save(ds, p)
        with pytest.raises(DatasetError, match="kind"):
            load(p, expect_kind=KIND_REAL)

    def test_csv_export(self, tmp_path):
        ds = generate_lowfreq_dataset("training", 2, 12.0, master_seed=4)
        p = tmp_path / "d.csv"
        with open(p, "w") as fh:
            to_csv(ds, fh)
        lines = p.read_text().strip().splitlines()
        assert len(lines) == 1 + len(ds)


@pytest.fixture(scope="module")
def tiny():
    return generate_backscatter_dataset("training", 2, None, master_seed=31,
                                        n_points=16, nodes_per_wavelength=8)


@pytest.mark.slow
class TestBackscatterGeneration:
    def test_shape_and_balance(self, tiny):
        assert tiny.kind == KIND_REAL
        assert tiny.features.shape == (8, 16)
        assert np.array_equal(tiny.class_counts(), [2, 2, 2, 2])
        assert np.all(tiny.features >= 0)       # clean signals are amplitudes

    def test_labels_follow_sound_speed(self, tiny):
        for i in range(len(tiny)):
            assert label_by_soundspeed(tiny.c_tops[i]).value == tiny.labels[i]

    def test_thickness_drawn_from_catalog(self, tiny):
        assert set(np.round(tiny.thicknesses, 3)) <= {0.25, 0.5, 0.75, 1.0}

    def test_deterministic(self, tiny):
        again = generate_backscatter_dataset("training", 2, None, master_seed=31,
                                             n_points=16, nodes_per_wavelength=8)
        assert np.array_equal(again.features, tiny.features)
        assert np.array_equal(again.thicknesses, tiny.thicknesses)

    def test_noise_only_rerun_via_clean_signals(self, tiny):
        noisy = generate_backscatter_dataset("training", 2, 20.0, master_seed=77,
                                             clean_signals=tiny)
        assert noisy.features.shape == tiny.features.shape
        assert not np.array_equal(noisy.features, tiny.features)
        assert np.array_equal(noisy.labels, tiny.labels)
        # clipping at zero is not applied: noise may push values negative
        assert noisy.snr_db == 20.0

    def test_worker_count_does_not_change_bits(self, tiny):
        two = generate_backscatter_dataset("training", 2, None, master_seed=31,
                                           n_points=16, nodes_per_wavelength=8,
                                           workers=2)
        assert np.array_equal(two.features, tiny.features)
