import numpy as np
import pytest

from easecp.data import PredictionOutput, RegressionDataset, ScoreDataset, cosine_ease
from easecp.errors import FormatError, ValidationError
from easecp.io import load_dataset, write_dataset
from easecp.synth import SynthConfig, generate, generate_regression

from conftest import random_prob_rows


def small_ds(rng, n=20, k=5, l=3, with_transformed=True, with_ease=False):
    probs = random_prob_rows(rng, n, k)
    labels = rng.integers(0, k, n)
    transformed = None
    if with_transformed:
        transformed = random_prob_rows(rng, n * l, k).reshape(n, l, k)
    ease = None
    if with_ease:
        ease = cosine_ease(
            probs, np.asarray(transformed)
        ) if with_transformed else rng.uniform(0, 1, n).astype(np.float32).astype(np.float64)
    return ScoreDataset(probs=probs, labels=labels, transformed_probs=transformed, ease=ease)


def assert_datasets_equal(a, b):
    if isinstance(a, RegressionDataset):
        fields = ("mu", "sigma", "targets", "transformed_mu", "ease")
    else:
        fields = ("probs", "labels", "transformed_probs", "ease")
    for f in fields:
        va, vb = getattr(a, f), getattr(b, f)
        if va is None:
            assert vb is None, f
        else:
            assert np.array_equal(va, vb), f


class TestValidation:
    def test_well_formed(self, rng):
        ds = small_ds(rng)
        assert ds.n_examples == 20 and ds.n_classes == 5 and ds.n_transforms == 3

    def test_row_not_normalized_names_row(self, rng):
        probs = random_prob_rows(rng, 4, 3)
        probs[2] = [0.5, 0.3, 0.1]  # sums to 0.9
        with pytest.raises(ValidationError, match="row 2"):
            ScoreDataset(probs=probs, labels=np.zeros(4, dtype=int))

    def test_label_out_of_range(self, rng):
        probs = random_prob_rows(rng, 3, 4)
        with pytest.raises(ValidationError, match="label 4"):
            ScoreDataset(probs=probs, labels=np.array([0, 4, 1]))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            ScoreDataset(probs=np.zeros((0, 3)), labels=np.zeros(0, dtype=int))

    def test_single_class_rejected(self, rng):
        with pytest.raises(ValidationError, match="2 classes"):
            ScoreDataset(probs=np.ones((3, 1)), labels=np.zeros(3, dtype=int))

    def test_ease_out_of_range(self, rng):
        probs = random_prob_rows(rng, 3, 3)
        with pytest.raises(ValidationError, match="ease"):
            ScoreDataset(probs=probs, labels=np.zeros(3, dtype=int),
                         ease=np.array([0.5, 1.5, 0.2]))

    def test_inconsistent_ease_rejected(self, rng):
        ds = small_ds(rng, with_transformed=True)
        good = cosine_ease(ds.probs, ds.transformed_probs)
        ScoreDataset(probs=ds.probs, labels=ds.labels,
                     transformed_probs=ds.transformed_probs, ease=good)  # fine
        bad = np.clip(good + 0.01, 0, 1)
        with pytest.raises(ValidationError, match="disagrees"):
            ScoreDataset(probs=ds.probs, labels=ds.labels,
                         transformed_probs=ds.transformed_probs, ease=bad)

    def test_neither_ease_nor_transformed_is_allowed(self, rng):
        ds = small_ds(rng, with_transformed=False)
        assert ds.transformed_probs is None and ds.ease is None

    def test_sigma_positive(self, rng):
        with pytest.raises(ValidationError, match="sigma"):
            RegressionDataset(mu=np.zeros(3), sigma=np.array([1.0, 0.0, 1.0]),
                              targets=np.zeros(3))

    def test_arrays_frozen(self, rng):
        ds = small_ds(rng)
        with pytest.raises(ValueError):
            ds.probs[0, 0] = 0.5


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        ds = small_ds(rng, with_transformed=True, with_ease=True)
        path = tmp_path / "d.cps"
        write_dataset(ds, str(path))
        assert_datasets_equal(load_dataset(str(path)), ds)

    def test_round_trip_synth(self, tmp_path):
        ds = generate(SynthConfig(n=50, k=6, l=2, target_accuracy=0.7, seed=1))
        path = tmp_path / "d.cps"
        write_dataset(ds, str(path))
        assert_datasets_equal(load_dataset(str(path)), ds)

    def test_round_trip_regression(self, tmp_path):
        ds = generate_regression(SynthConfig(n=40, k=2, l=3, target_accuracy=0.6, seed=2))
        path = tmp_path / "r.cps"
        write_dataset(ds, str(path))
        assert_datasets_equal(load_dataset(str(path)), ds)

    def test_ease_only_file_omits_transformed_block(self, rng, tmp_path):
        ds_full = small_ds(rng, with_transformed=True, with_ease=True)
        ds = ScoreDataset(probs=ds_full.probs, labels=ds_full.labels, ease=ds_full.ease)
        path = tmp_path / "d.cps"
        write_dataset(ds, str(path))
        n, k = ds.probs.shape
        expected = 18 + 4 * (n * k) + 4 * n + 4 * n  # header + probs + labels + ease
        assert path.stat().st_size == expected
        loaded = load_dataset(str(path))
        assert loaded.transformed_probs is None
        assert_datasets_equal(loaded, ds)

    def test_magic_is_cps1(self, rng, tmp_path):
        path = tmp_path / "d.cps"
        write_dataset(small_ds(rng), str(path))
        assert path.read_bytes()[:4] == b"CPS1"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.cps"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError, match="magic"):
            load_dataset(str(path))

    def test_truncated(self, rng, tmp_path):
        path = tmp_path / "d.cps"
        write_dataset(small_ds(rng), str(path))
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(FormatError, match="truncated|dimension"):
            load_dataset(str(path))

    def test_trailing_bytes(self, rng, tmp_path):
        path = tmp_path / "d.cps"
        write_dataset(small_ds(rng), str(path))
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            load_dataset(str(path))

    def test_invalid_content_rejected_on_load(self, rng, tmp_path):
        # valid container, invalid payload: label out of range
        ds = small_ds(rng, with_transformed=False)
        path = tmp_path / "d.cps"
        write_dataset(ds, str(path))
        raw = bytearray(path.read_bytes())
        n, k = ds.probs.shape
        label_off = 18 + 4 * n * k
        raw[label_off : label_off + 4] = (k + 3).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(ValidationError, match="out of range"):
            load_dataset(str(path))


class TestCsvFormat:
    def test_round_trip(self, rng, tmp_path):
        ds = small_ds(rng, with_transformed=False, with_ease=True)
        path = tmp_path / "d.csv"
        write_dataset(ds, str(path))
        loaded = load_dataset(str(path))
        assert np.array_equal(loaded.labels, ds.labels)
        assert np.allclose(loaded.probs, ds.probs, rtol=1e-9, atol=0)
        assert np.allclose(loaded.ease, ds.ease, rtol=1e-9, atol=0)

    def test_round_trip_regression(self, tmp_path):
        ds = generate_regression(SynthConfig(n=25, k=2, l=2, target_accuracy=0.6, seed=5))
        ds = RegressionDataset(mu=ds.mu, sigma=ds.sigma, targets=ds.targets, ease=ds.ease)
        path = tmp_path / "r.csv"
        write_dataset(ds, str(path))
        loaded = load_dataset(str(path))
        assert np.allclose(loaded.mu, ds.mu, rtol=1e-9)
        assert np.allclose(loaded.sigma, ds.sigma, rtol=1e-9)

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(FormatError, match="header"):
            load_dataset(str(path))

    def test_width_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,p0,p1\n0,0.5,0.5\n1,0.5\n")
        with pytest.raises(FormatError, match="row 1"):
            load_dataset(str(path))

    def test_unparseable_value(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,p0,p1\n0,0.5,oops\n")
        with pytest.raises(FormatError, match="row 0"):
            load_dataset(str(path))

    def test_format_inferred_from_extension(self, rng, tmp_path):
        ds = small_ds(rng, with_transformed=False)
        p_csv = tmp_path / "d.csv"
        write_dataset(ds, str(p_csv))
        assert p_csv.read_text().startswith("label,p0")


class TestPredictionOutput:
    def test_label_sets_requires_membership(self):
        out = PredictionOutput(kind="classification", covered=np.array([True]),
                               size=np.array([1]))
        with pytest.raises(ValidationError):
            out.label_sets()

    def test_regression_requires_bounds(self):
        with pytest.raises(ValidationError, match="lo/hi"):
            PredictionOutput(kind="regression", covered=np.array([True]),
                             size=np.array([1.0]))
