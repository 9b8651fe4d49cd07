import numpy as np
import pytest

from chinf import (
    AnomalySpec,
    MtsSeries,
    SyntheticConfig,
    gen_synthetic,
    inject_anomalies,
    load_csv,
    save_csv,
)


class TestSyntheticConfig:
    def test_default_frequencies_are_distinct(self):
        cfg = SyntheticConfig(clusters=8)
        freqs = cfg.frequencies()
        assert len(freqs) == 8
        assert len(set(freqs)) == 8

    def test_frequencies_extend_past_the_base_pool(self):
        freqs = SyntheticConfig(clusters=10).frequencies()
        assert len(freqs) == 10
        assert freqs[9] > freqs[8] > freqs[7]

    def test_explicit_frequencies_must_match_clusters(self):
        with pytest.raises(ValueError, match="need 3 base frequencies, got 2"):
            SyntheticConfig(clusters=3, base_frequencies=(1.0, 2.0))

    def test_rejects_negative_noise(self):
        with pytest.raises(ValueError, match="noise_std"):
            SyntheticConfig(noise_std=-0.1)


class TestGenSynthetic:
    def test_shape_and_names(self):
        series = gen_synthetic(SyntheticConfig(clusters=4, channels_per_cluster=8, length=50))
        assert series.values.shape == (50, 32)
        assert series.channel_names[0] == "c0_0"
        assert series.channel_names[31] == "c3_7"
        assert not series.timestep_labels.any()

    def test_deterministic(self):
        cfg = SyntheticConfig(clusters=2, channels_per_cluster=3, length=64, seed=9)
        a = gen_synthetic(cfg)
        b = gen_synthetic(cfg)
        assert np.array_equal(a.values, b.values)
        c = gen_synthetic(SyntheticConfig(2, 3, 64, seed=10))
        assert not np.array_equal(a.values, c.values)

    def test_no_jitter_no_noise_makes_cluster_channels_identical(self):
        cfg = SyntheticConfig(
            clusters=2, channels_per_cluster=3, length=80, phase_jitter=0.0, noise_std=0.0
        )
        series = gen_synthetic(cfg)
        assert np.array_equal(series.values[:, 0], series.values[:, 1])
        assert np.array_equal(series.values[:, 0], series.values[:, 2])
        assert not np.array_equal(series.values[:, 0], series.values[:, 3])

    def test_clusters_use_their_own_frequency(self):
        cfg = SyntheticConfig(
            clusters=2,
            channels_per_cluster=1,
            length=400,
            base_frequencies=(2.0, 9.0),
            phase_jitter=0.0,
            noise_std=0.0,
        )
        series = gen_synthetic(cfg)
        spectrum = np.abs(np.fft.rfft(series.values, axis=0))
        assert np.argmax(spectrum[:, 0]) == 2
        assert np.argmax(spectrum[:, 1]) == 9


def flat_series(t=40, n=3):
    return MtsSeries(np.zeros((t, n)), tuple(f"ch{i}" for i in range(n)))


class TestAnomalySpec:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown anomaly kind 'step'"):
            AnomalySpec("step", (0,), ((1, 2),))

    def test_rejects_empty_interval(self):
        with pytest.raises(ValueError, match=r"interval \[5, 5\) is empty"):
            AnomalySpec("spike", (0,), ((5, 5),))

    def test_rejects_overlapping_intervals(self):
        with pytest.raises(ValueError, match="overlap"):
            AnomalySpec("spike", (0,), ((2, 8), (5, 9)))

    def test_rejects_duplicate_channels(self):
        with pytest.raises(ValueError, match="unique"):
            AnomalySpec("spike", (1, 1), ((0, 2),))


class TestInjectAnomalies:
    def test_spike_moves_values_by_magnitude(self):
        spec = AnomalySpec("spike", (1,), ((10, 15),), magnitude=2.5)
        out = inject_anomalies(flat_series(), spec, seed=3)
        assert np.array_equal(np.abs(out.values[10:15, 1]), np.full(5, 2.5))
        assert not out.values[:10].any()
        assert not out.values[:, [0, 2]].any()

    def test_labels_mark_intervals_only(self):
        spec = AnomalySpec("spike", (0,), ((3, 6), (20, 22)), magnitude=1.0)
        out = inject_anomalies(flat_series(), spec, seed=0)
        expected = np.zeros(40, dtype=int)
        expected[3:6] = 1
        expected[20:22] = 1
        assert np.array_equal(out.timestep_labels, expected)

    def test_zero_magnitude_keeps_values_but_sets_labels(self):
        series = gen_synthetic(SyntheticConfig(length=60, seed=1))
        spec = AnomalySpec("spike", (0,), ((5, 12),), magnitude=0.0)
        out = inject_anomalies(series, spec, seed=2)
        assert np.array_equal(out.values, series.values)
        assert out.timestep_labels[5:12].all()
        assert out.timestep_labels.sum() == 7

    def test_drift_ramps_linearly(self):
        spec = AnomalySpec("drift", (2,), ((0, 5),), magnitude=4.0)
        out = inject_anomalies(flat_series(), spec, seed=0)
        assert np.array_equal(out.values[0:5, 2], [0.0, 1.0, 2.0, 3.0, 4.0])

    def test_correlation_break_roughly_preserves_moments(self):
        rng = np.random.default_rng(6)
        base = MtsSeries(
            np.column_stack([np.sin(np.arange(500.0) / 7.0)] * 2) + rng.normal(0, 0.01, (500, 2)),
            ("a", "b"),
        )
        spec = AnomalySpec("correlation_break", (1,), ((0, 500),))
        out = inject_anomalies(base, spec, seed=7)
        seg_in = base.values[:, 1]
        seg_out = out.values[:, 1]
        assert abs(seg_out.mean() - seg_in.mean()) < 0.1
        assert abs(seg_out.std() - seg_in.std()) < 0.1
        # the point of the break: correlation with the partner collapses
        assert abs(np.corrcoef(out.values[:, 0], seg_out)[0, 1]) < 0.2

    def test_composes_and_keeps_earlier_labels(self):
        series = flat_series()
        first = inject_anomalies(
            series, AnomalySpec("spike", (0,), ((2, 4),), magnitude=1.0), seed=0
        )
        second = inject_anomalies(
            first, AnomalySpec("drift", (1,), ((30, 35),), magnitude=1.0), seed=0
        )
        assert second.timestep_labels[2:4].all()
        assert second.timestep_labels[30:35].all()
        assert second.timestep_labels.sum() == 7

    def test_interval_past_series_end_rejected(self):
        spec = AnomalySpec("spike", (0,), ((30, 45),), magnitude=1.0)
        with pytest.raises(ValueError, match=r"\[30, 45\) exceeds series length 40"):
            inject_anomalies(flat_series(), spec)

    def test_channel_out_of_range_rejected(self):
        spec = AnomalySpec("spike", (3,), ((0, 2),), magnitude=1.0)
        with pytest.raises(ValueError, match="channel 3 out of range for 3"):
            inject_anomalies(flat_series(), spec)

    def test_injection_is_seed_deterministic(self):
        series = gen_synthetic(SyntheticConfig(length=60, seed=4))
        spec = AnomalySpec("spike", (1,), ((10, 20),), magnitude=0.5)
        a = inject_anomalies(series, spec, seed=5)
        b = inject_anomalies(series, spec, seed=5)
        assert np.array_equal(a.values, b.values)

    def test_anomalous_fraction_is_controllable(self):
        t = 1000
        series = MtsSeries(np.zeros((t, 2)), ("a", "b"))
        k = 25
        spec = AnomalySpec(
            "spike", (0,), ((100, 100 + k), (600, 600 + k)), magnitude=1.0
        )
        out = inject_anomalies(series, spec)
        assert out.timestep_labels.sum() / t == 0.05


class TestCsv:
    def test_two_by_two_literal(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("a,b\n1,2\n3,4\n")
        series = load_csv(str(path))
        assert series.channel_names == ("a", "b")
        assert np.array_equal(series.values, [[1.0, 2.0], [3.0, 4.0]])

    def test_headerless_gets_default_names(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("1,2\n3,4\n")
        series = load_csv(str(path))
        assert series.channel_names == ("c0", "c1")
        assert series.values.shape == (2, 2)

    def test_roundtrip_is_bit_exact(self, tmp_path):
        series = gen_synthetic(SyntheticConfig(clusters=2, channels_per_cluster=2, length=50, seed=2))
        spiked = inject_anomalies(
            series, AnomalySpec("spike", (1,), ((10, 14),), magnitude=0.7), seed=1
        )
        path = tmp_path / "series.csv"
        save_csv(spiked, str(path))
        back = load_csv(str(path))
        assert back.channel_names == spiked.channel_names
        assert np.array_equal(back.values, spiked.values)
        assert np.array_equal(back.timestep_labels, spiked.timestep_labels)

    def test_labels_file_is_optional(self, tmp_path):
        series = MtsSeries(np.ones((3, 2)), ("a", "b"))
        path = tmp_path / "plain.csv"
        save_csv(series, str(path))
        assert not (tmp_path / "plain.csv.labels").exists()
        assert load_csv(str(path)).timestep_labels is None

    def test_ragged_row_names_its_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(ValueError, match="line 3: expected 2 values, got 1"):
            load_csv(str(path))

    def test_non_numeric_cell_names_its_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ValueError, match="line 3: 'oops' is not a number"):
            load_csv(str(path))

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("\n\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(str(path))

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("a,b\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(str(path))

    def test_bad_label_value_rejected(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("1,2\n3,4\n")
        (tmp_path / "l.csv.labels").write_text("0\n2\n")
        with pytest.raises(ValueError, match="label must be 0 or 1, got '2'"):
            load_csv(str(path))

    def test_label_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3,4\n")
        (tmp_path / "m.csv.labels").write_text("0\n")
        with pytest.raises(ValueError, match="label count 1 does not match 2"):
            load_csv(str(path))
