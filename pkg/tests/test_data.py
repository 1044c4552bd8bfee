import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsmetric.data import (
    AugmentParams, ImageSample, LabeledDataset, affine_transform, augment, expand_dataset,
    load_dataset, read_container, read_pnm, resize, sample_pairs, split, write_container,
    write_pnm,
)
from fsmetric.errors import DataError


def _dataset(counts, size=6, seed=0, names=None):
    rng = np.random.default_rng(seed)
    samples = []
    for label, n in enumerate(counts):
        for i in range(n):
            samples.append(ImageSample(rng.random((size, size, 1), dtype=np.float32), label,
                                       f"s{label}_{i}"))
    names = names or [f"c{i}" for i in range(len(counts))]
    return LabeledDataset(samples, names)


# ingestion -----------------------------------------------------------------

def test_load_directory_layout(tmp_path):
    for name, n in (("normal", 3), ("covid", 2)):
        (tmp_path / name).mkdir()
        for i in range(n):
            write_pnm(tmp_path / name / f"{i}.pgm", np.full((4, 4, 1), 0.5))
    ds = load_dataset(tmp_path)
    assert len(ds) == 5
    assert ds.category_names == ["covid", "normal"]
    assert ds.labels.tolist() == [0, 0, 1, 1, 1]


def test_pgm_full_scale_is_one(tmp_path):
    write_pnm(tmp_path / "a.pgm", np.ones((3, 5)))
    px = read_pnm(tmp_path / "a.pgm")
    assert px.shape == (3, 5, 1)
    assert np.all(px == 1.0)


def test_ppm_16bit_scaling(tmp_path):
    path = tmp_path / "x.ppm"
    with open(path, "wb") as f:
        f.write(b"P6\n1 1\n65535\n")
        f.write(np.array([32768, 0, 65535], dtype=">u2").tobytes())
    px = read_pnm(path)
    assert px[0, 0, 0] == np.float32(32768 / 65535)
    assert px[0, 0, 0] == pytest.approx(0.50001, abs=1e-5)


def test_ascii_pgm_with_comment(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2\n# comment\n2 1\n4\n0 4\n")
    np.testing.assert_array_equal(read_pnm(path)[..., 0], [[0.0, 1.0]])


def test_truncated_file_names_path(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    bad = tmp_path / "a" / "broken.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    write_pnm(tmp_path / "b" / "ok.pgm", np.zeros((4, 4)))
    with pytest.raises(DataError, match="broken.pgm"):
        load_dataset(tmp_path)


def test_empty_category_and_empty_root(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    write_pnm(tmp_path / "a" / "x.pgm", np.zeros((2, 2)))
    with pytest.raises(DataError, match="no images"):
        load_dataset(tmp_path)


def test_color_converted_to_gray(tmp_path):
    for c in "ab":
        (tmp_path / c).mkdir()
        rgb = np.zeros((2, 2, 3))
        rgb[..., 0] = 1.0
        write_pnm(tmp_path / c / "x.ppm", rgb)
    ds = load_dataset(tmp_path)
    assert ds.samples[0].pixels.shape == (2, 2, 1)
    np.testing.assert_allclose(ds.samples[0].pixels, 1 / 3, rtol=1e-6)
    assert load_dataset(tmp_path, grayscale=False).samples[0].pixels.shape == (2, 2, 3)


def test_container_round_trip(tmp_path):
    ds = _dataset([3, 4, 2])
    write_container(ds, tmp_path / "d.fsdt")
    back = read_container(tmp_path / "d.fsdt", ds.category_names)
    assert back.labels.tolist() == ds.labels.tolist()
    for a, b in zip(ds.samples, back.samples):
        assert a.pixels.tobytes() == b.pixels.tobytes()
    assert (tmp_path / "d.fsdt").read_bytes()[:4] == b"FSDT"


def test_container_in_category_dir(tmp_path):
    ds = _dataset([2, 2])
    for name in ("x", "y"):
        (tmp_path / name).mkdir()
        write_container(ds, tmp_path / name / "part.fsdt")
    loaded = load_dataset(tmp_path)
    assert loaded.labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]


# resize --------------------------------------------------------------------

def test_identity_resize():
    img = _dataset([1, 1], size=7).samples[0]
    assert resize(img, (7, 7)).pixels.tobytes() == img.pixels.tobytes()


def test_constant_resize():
    img = ImageSample(np.full((1, 1, 1), 0.3, np.float32), 0)
    assert np.all(resize(img, (5, 9)).pixels == np.float32(0.3))


def test_corner_aligned_midpoint():
    img = ImageSample(np.array([[[0.0]], [[1.0]]], np.float32), 0)
    np.testing.assert_array_equal(resize(img, (3, 1)).pixels[:, 0, 0], [0, 0.5, 1])


# augmentation --------------------------------------------------------------

def test_degenerate_augment_is_identity():
    img = _dataset([1, 1], size=9).samples[0]
    out = augment(img, AugmentParams(rotation=0, shear=0, zoom=(1, 1), seed=3))
    assert out.pixels.tobytes() == img.pixels.tobytes()
    assert affine_transform(img).pixels.tobytes() == img.pixels.tobytes()


@pytest.mark.parametrize("size", [5, 8])
def test_quarter_turns_are_exact(size):
    img = _dataset([1, 1], size=size).samples[0]
    once = affine_transform(img, rotation=90)
    np.testing.assert_array_equal(once.pixels[..., 0], np.rot90(img.pixels[..., 0], k=-1))
    out = img
    for _ in range(4):
        out = affine_transform(out, rotation=90)
    assert out.pixels.tobytes() == img.pixels.tobytes()


def test_augment_seeded():
    img = _dataset([1, 1], size=12).samples[0]
    p = AugmentParams(seed=11)
    assert augment(img, p, 4).pixels.tobytes() == augment(img, p, 4).pixels.tobytes()
    assert augment(img, p, 4).pixels.tobytes() != augment(img, p, 5).pixels.tobytes()


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rot=st.floats(0, 45), shear=st.floats(0, 0.5),
       lo=st.floats(0.5, 1.0), hi=st.floats(1.0, 1.6), fill=st.sampled_from(["edge", "constant"]))
def test_augment_closure(seed, rot, shear, lo, hi, fill):
    img = _dataset([1, 1], size=10, seed=seed % 1000).samples[0]
    out = augment(img, AugmentParams(rot, shear, (lo, hi), seed, fill=fill))
    assert out.pixels.shape == img.pixels.shape
    assert out.pixels.min() >= 0 and out.pixels.max() <= 1
    assert out.label == img.label


# expansion -----------------------------------------------------------------

def test_expand_zero_fraction():
    ds = _dataset([5, 5])
    assert len(expand_dataset(ds, 0.0, AugmentParams())) == 10


def test_expand_ten_percent():
    ds = _dataset([100, 100, 100], size=4)
    big = expand_dataset(ds, 0.10, AugmentParams(seed=1))
    assert len(big) == 330
    added = big.samples[300:]
    assert np.bincount([s.label for s in added]).tolist() == [10, 10, 10]
    by_id = {s.source_id: s for s in ds.samples}
    for s in added:
        assert s.label == by_id[s.source_id.split("+aug")[0]].label


def test_expand_balance_uneven():
    ds = _dataset([7, 13, 20], size=4)
    big = expand_dataset(ds, 0.25, AugmentParams(seed=2))
    added = np.bincount([s.label for s in big.samples[40:]], minlength=3)
    assert added.sum() == 10
    assert np.all(np.abs(added - 0.25 * np.array([7, 13, 20])) <= 1)


# splitting -----------------------------------------------------------------

def test_split_exact_ratios():
    s = split(_dataset([10, 10, 10]), seed=4)
    assert (len(s.train_idx), len(s.val_idx), len(s.test_idx)) == (18, 6, 6)


def test_split_thirds():
    s = split(_dataset([9, 3]), ratios=(1 / 3, 1 / 3, 1 / 3), seed=0)
    labels = s.parent.labels
    for idx in (s.train_idx, s.val_idx, s.test_idx):
        assert (labels[idx] == 0).sum() == 3


def test_split_deterministic():
    ds = _dataset([12, 9, 15])
    a, b = split(ds, seed=8), split(ds, seed=8)
    for x, y in zip((a.train_idx, a.val_idx, a.test_idx), (b.train_idx, b.val_idx, b.test_idx)):
        np.testing.assert_array_equal(x, y)


def test_split_too_small_names_category():
    with pytest.raises(DataError, match="tiny"):
        split(_dataset([10, 2], names=["big", "tiny"]))


@settings(max_examples=60, deadline=None)
@given(counts=st.lists(st.integers(5, 40), min_size=2, max_size=5), seed=st.integers(0, 10**6))
def test_split_partition_and_stratification(counts, seed):
    ds = _dataset(counts, size=1)
    ratios = (0.6, 0.2, 0.2)
    s = split(ds, ratios, seed)
    parts = [set(s.train_idx.tolist()), set(s.val_idx.tolist()), set(s.test_idx.tolist())]
    assert set().union(*parts) == set(range(len(ds)))
    assert sum(len(p) for p in parts) == len(ds)
    labels = ds.labels
    for c, n in enumerate(counts):
        for idx, r in zip((s.train_idx, s.val_idx, s.test_idx), ratios):
            assert abs((labels[idx] == c).sum() - r * n) <= 1


# pairs ---------------------------------------------------------------------

def test_pair_counts():
    pb = sample_pairs(_dataset([4, 4, 4]), 10, 0.5, seed=0)
    assert len(pb) == 10 and pb.same.sum() == 5


def test_pair_determinism():
    ds = _dataset([4, 5])
    a, b = sample_pairs(ds, 50, 0.3, seed=9), sample_pairs(ds, 50, 0.3, seed=9)
    assert list(a) == list(b)


def test_pair_soundness_many_seeds():
    ds = _dataset([3, 5, 2, 4], size=1)
    labels = ds.labels
    for seed in range(1000):
        pb = sample_pairs(ds, 12, 0.5, seed=seed)
        assert np.all(pb.same == (labels[pb.a] == labels[pb.b]))
        assert np.all(pb.a != pb.b)


def test_single_category_has_no_negative_pairs():
    ds = _dataset([4, 4])
    with pytest.raises(DataError):
        sample_pairs(ds, 10, 0.5, labels=np.zeros(8, dtype=int))


def test_pairs_need_two_per_category():
    with pytest.raises(DataError):
        sample_pairs(_dataset([1, 4]), 10, 0.5)
