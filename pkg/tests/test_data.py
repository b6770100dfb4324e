import json

import numpy as np
import pytest

from fedtwin.data import (
    DEFAULT_PROFILE,
    ConditionLabel,
    OperatingRegime,
    SyntheticProfile,
    WindowDataset,
    dataset_from_bytes,
    dataset_to_bytes,
    filter_subset,
    generate_dataset,
    generate_synthetic,
    import_csv_recording,
    load_dataset,
    save_dataset,
    train_test_split,
    window_and_normalize,
)
from fedtwin.errors import (
    ContractError,
    DegenerateDataError,
    EmptySubsetError,
    FormatError,
    SplitError,
)


class TestEnums:
    def test_condition_codes_pinned(self):
        assert [c.name for c in ConditionLabel] == [
            "N", "FB", "BoR", "BrR", "MR", "UR", "PL", "UV",
        ]
        assert [int(c) for c in ConditionLabel] == list(range(8))

    def test_regime_parameters(self):
        assert OperatingRegime.R3L.rpm == 3000
        assert OperatingRegime.R3L.load_nm == 0.06
        assert OperatingRegime.R2H.load_nm == 0.7
        assert OperatingRegime.parse("2h") is OperatingRegime.R2H
        assert ConditionLabel.parse("bor") is ConditionLabel.BoR

    def test_r3l_fundamental_is_50hz(self):
        assert DEFAULT_PROFILE.fundamental_hz(OperatingRegime.R3L) == 50.0
        assert DEFAULT_PROFILE.fundamental_hz(OperatingRegime.R2H) == pytest.approx(2000 / 60)


class TestGenerator:
    def test_deterministic_per_seed(self):
        a = generate_synthetic(DEFAULT_PROFILE, ConditionLabel.FB, OperatingRegime.R3L, 0.5, seed=4)
        b = generate_synthetic(DEFAULT_PROFILE, ConditionLabel.FB, OperatingRegime.R3L, 0.5, seed=4)
        np.testing.assert_array_equal(a, b)
        c = generate_synthetic(DEFAULT_PROFILE, ConditionLabel.FB, OperatingRegime.R3L, 0.5, seed=5)
        assert not np.array_equal(a, c)

    def test_shape_and_finiteness(self):
        raw = generate_synthetic(DEFAULT_PROFILE, ConditionLabel.N, OperatingRegime.R2L, 1.0, seed=0)
        assert raw.shape == (3, 12000)
        assert np.isfinite(raw).all()

    def test_fb_has_more_high_band_energy_than_n(self):
        """FFT oracle: bearing bursts put energy near the 2.8 kHz carrier."""
        for seed in range(3):
            spectra = {}
            for condition in (ConditionLabel.N, ConditionLabel.FB):
                raw = generate_synthetic(
                    DEFAULT_PROFILE, condition, OperatingRegime.R3L, 2.0, seed=seed
                )
                vib = raw[0]
                freqs = np.fft.rfftfreq(vib.size, d=1.0 / 12000)
                power = np.abs(np.fft.rfft(vib)) ** 2
                band = (freqs > 2000) & (freqs < 3600)
                spectra[condition] = power[band].sum() / power.sum()
            assert spectra[ConditionLabel.FB] > spectra[ConditionLabel.N]

    def test_distinct_conditions_distinct_signals(self):
        raws = [
            generate_synthetic(DEFAULT_PROFILE, c, OperatingRegime.R2H, 0.2, seed=1)
            for c in ConditionLabel
        ]
        for i in range(len(raws)):
            for j in range(i + 1, len(raws)):
                assert not np.allclose(raws[i], raws[j])


class TestWindowing:
    def test_two_windows_from_512(self):
        rng = np.random.default_rng(0)
        raw = rng.standard_normal((3, 512))
        assert window_and_normalize(raw).shape == (2, 3, 256)

    def test_sixty_seconds_gives_2812_windows(self):
        # 60 s * 12 kHz = 720000 samples -> floor(720000 / 256) = 2812
        assert 720000 // 256 == 2812
        raw = generate_synthetic(
            DEFAULT_PROFILE, ConditionLabel.N, OperatingRegime.R3L, 60.0, seed=0
        )
        assert window_and_normalize(raw).shape[0] == 2812

    def test_channel_peak_exactly_one(self):
        rng = np.random.default_rng(1)
        raw = rng.standard_normal((3, 1024)) * [[3.0], [0.5], [7.0]]
        windows = window_and_normalize(raw)
        flat = windows.transpose(1, 0, 2).reshape(3, -1)
        np.testing.assert_array_equal(np.abs(flat).max(axis=1), [1.0, 1.0, 1.0])
        assert np.abs(windows).max() <= 1.0

    def test_all_zero_channel_rejected(self):
        raw = np.zeros((3, 512))
        raw[0] = 1.0
        raw[1] = 1.0
        with pytest.raises(DegenerateDataError):
            window_and_normalize(raw)

    def test_too_short_recording(self):
        with pytest.raises(Exception):
            window_and_normalize(np.ones((3, 100)))


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(DEFAULT_PROFILE, seconds=0.5, seed=7)


class TestFilterAndSplit:
    def test_filter_matches_table_style_subsets(self, dataset):
        sub = filter_subset(
            dataset,
            {ConditionLabel.N, ConditionLabel.PL},
            {OperatingRegime.R3L},
        )
        assert sub.conditions_present() == {ConditionLabel.N, ConditionLabel.PL}
        assert sub.regimes_present() == {OperatingRegime.R3L}

    def test_filter_identity_with_full_sets(self, dataset):
        full = filter_subset(dataset, set(ConditionLabel), set(OperatingRegime))
        assert len(full) == len(dataset)
        np.testing.assert_array_equal(full.labels, dataset.labels)

    def test_filter_idempotent(self, dataset):
        args = ({ConditionLabel.BoR, ConditionLabel.N}, set(OperatingRegime))
        once = filter_subset(dataset, *args)
        twice = filter_subset(once, *args)
        np.testing.assert_array_equal(once.windows, twice.windows)

    def test_empty_subset_error(self, dataset):
        tiny = filter_subset(dataset, {ConditionLabel.N}, {OperatingRegime.R2L})
        with pytest.raises(EmptySubsetError):
            filter_subset(tiny, {ConditionLabel.FB}, {OperatingRegime.R2L})

    def test_empty_filter_arguments(self, dataset):
        with pytest.raises(ContractError):
            filter_subset(dataset, set(), {OperatingRegime.R2L})

    def test_split_is_stratified_and_exact(self, dataset):
        train, test = train_test_split(dataset, fraction=0.8, seed=3)
        assert len(train) + len(test) == len(dataset)
        for condition in ConditionLabel:
            for regime in OperatingRegime:
                total = int(((dataset.labels == condition) & (dataset.regimes == regime)).sum())
                got = int(((train.labels == condition) & (train.regimes == regime)).sum())
                assert got == int(0.8 * total)

    def test_split_deterministic_and_disjoint(self, dataset):
        a_train, a_test = train_test_split(dataset, 0.8, seed=11)
        b_train, b_test = train_test_split(dataset, 0.8, seed=11)
        np.testing.assert_array_equal(a_train.windows, b_train.windows)
        np.testing.assert_array_equal(a_test.windows, b_test.windows)
        # union is the dataset, intersection empty (windows are unique rows)
        joined = np.concatenate([a_train.windows, a_test.windows])
        assert joined.shape[0] == dataset.windows.shape[0]
        key = dataset.windows.reshape(len(dataset), -1)
        jkey = joined.reshape(len(joined), -1)
        assert len(np.unique(jkey, axis=0)) == len(np.unique(key, axis=0))

    def test_split_error_on_tiny_stratum(self):
        windows = np.random.default_rng(0).uniform(-1, 1, (3, 3, 256))
        ds = WindowDataset(windows, [0, 0, 1], [0, 0, 0])
        with pytest.raises(SplitError):
            train_test_split(ds, 0.5, seed=0)


class TestDatasetFiles:
    def test_roundtrip_bit_exact(self, tmp_path):
        dataset = generate_dataset(
            DEFAULT_PROFILE,
            conditions={ConditionLabel.N, ConditionLabel.UV},
            regimes={OperatingRegime.R2L},
            seconds=0.3,
            seed=9,
        )
        path = tmp_path / "data.ftds"
        save_dataset(dataset, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.windows, dataset.windows)
        np.testing.assert_array_equal(loaded.labels, dataset.labels)
        np.testing.assert_array_equal(loaded.regimes, dataset.regimes)
        save_dataset(loaded, tmp_path / "again.ftds")
        assert (tmp_path / "again.ftds").read_bytes() == path.read_bytes()

    def test_truncated_file(self):
        blob = dataset_to_bytes(
            generate_dataset(DEFAULT_PROFILE, conditions={ConditionLabel.N},
                             regimes={OperatingRegime.R2L}, seconds=0.3, seed=0)
        )
        with pytest.raises(FormatError, match="truncated"):
            dataset_from_bytes(blob[:-10])

    def test_bad_magic_and_bad_codes(self):
        good = dataset_to_bytes(
            generate_dataset(DEFAULT_PROFILE, conditions={ConditionLabel.N},
                             regimes={OperatingRegime.R2L}, seconds=0.3, seed=0)
        )
        with pytest.raises(FormatError, match="magic"):
            dataset_from_bytes(b"NOPE" + good[4:])
        # corrupt the first window's condition code to 8
        header_len = 4 + 4 + 4 + 1 + 2
        bad = bytearray(good)
        bad[header_len] = 8
        with pytest.raises(FormatError, match="condition code 8"):
            dataset_from_bytes(bytes(bad))

    def test_csv_import(self, tmp_path):
        rng = np.random.default_rng(3)
        t = np.arange(600) / 12000
        signal = np.stack([np.sin(700 * t), np.cos(700 * t), 0.5 * np.sin(120 * t) + 0.1])
        lines = ["time,ch1,ch2,ch3"]
        for i in range(600):
            lines.append(f"{t[i]},{signal[0, i]},{signal[1, i]},{signal[2, i]}")
        csv_path = tmp_path / "rec.csv"
        csv_path.write_text("\n".join(lines))
        (tmp_path / "rec.meta.json").write_text(
            json.dumps({"condition": "FB", "regime": "3L", "sample_rate": 12000})
        )
        ds = import_csv_recording(csv_path)
        assert len(ds) == 2
        assert ds.conditions_present() == {ConditionLabel.FB}
        assert ds.regimes_present() == {OperatingRegime.R3L}

    def test_csv_missing_sidecar(self, tmp_path):
        path = tmp_path / "rec.csv"
        path.write_text("time,ch1,ch2,ch3\n0,1,1,1\n")
        with pytest.raises(FormatError, match="sidecar"):
            import_csv_recording(path)


class TestProfile:
    def test_json_roundtrip(self):
        text = DEFAULT_PROFILE.to_json()
        again = SyntheticProfile.from_json(text)
        assert again.to_json() == text
        for condition in ConditionLabel:
            a = generate_synthetic(DEFAULT_PROFILE, condition, OperatingRegime.R2L, 0.1, seed=1)
            b = generate_synthetic(again, condition, OperatingRegime.R2L, 0.1, seed=1)
            np.testing.assert_array_equal(a, b)

    def test_duplicate_signatures_rejected(self):
        sig = DEFAULT_PROFILE.signature(ConditionLabel.N)
        with pytest.raises(ContractError):
            SyntheticProfile(signatures=(("N", sig), ("FB", sig)))

    def test_dataset_regenerable_bit_exact(self):
        kwargs = dict(
            conditions={ConditionLabel.MR, ConditionLabel.UR},
            regimes={OperatingRegime.R3H},
            seconds=0.4,
            seed=21,
        )
        a = generate_dataset(DEFAULT_PROFILE, **kwargs)
        b = generate_dataset(DEFAULT_PROFILE, **kwargs)
        np.testing.assert_array_equal(a.windows, b.windows)
