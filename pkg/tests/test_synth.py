import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specswd import adt1
from specswd.errors import ConfigError, DataError, DimensionError
from specswd.spectral import high_frequency_fraction
from specswd.synth import (
    GenConfig,
    band_energy,
    block_dct,
    block_idct,
    build_dataset,
    checkerboard,
    checkerboard_band_mask,
    dct_matrix,
    degrade,
    generate_dataset,
    generate_fake,
    generate_real,
    load_dataset,
    sample_seed,
)

CFG = GenConfig()


def best_threshold_accuracy(neg, pos):
    x = np.r_[neg, pos]
    y = np.r_[np.zeros(len(neg)), np.ones(len(pos))]
    return max(max(((x >= t) == y).mean(), ((x < t) == y).mean()) for t in np.unique(x))


def test_dct_matrix_orthonormal_and_matches_scipy():
    from scipy.fft import dct

    m = dct_matrix(8)
    np.testing.assert_allclose(m @ m.T, np.eye(8), atol=1e-14)
    np.testing.assert_allclose(m, dct(np.eye(8), norm="ortho", axis=0), atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_block_dct_round_trip(seed):
    x = np.random.default_rng(seed).uniform(-128, 128, (16, 24))
    np.testing.assert_allclose(block_idct(block_dct(x)), x, atol=1e-9)


def test_real_images_in_range_and_smooth():
    fracs = []
    for i in range(100):
        img = generate_real(CFG, sample_seed(1, i))
        assert img.shape == (1, 32, 32) and img.min() >= 0 and img.max() <= 1
        fracs.append(high_frequency_fraction(img))
    assert max(fracs) < 0.10


def test_same_seed_same_image():
    np.testing.assert_array_equal(generate_real(CFG, sample_seed(3, 4)), generate_real(CFG, sample_seed(3, 4)))


def test_zero_amplitude_fake_equals_real():
    cfg = GenConfig(artifact_amplitude=0.0)
    np.testing.assert_array_equal(generate_fake(cfg, sample_seed(0, 1)), generate_real(cfg, sample_seed(0, 1)))


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_fake_differs_only_inside_patch(i):
    fake, base = generate_fake(CFG, sample_seed(2, i), return_base=True)
    diff = np.argwhere(fake != base)
    if diff.size:
        span = diff.max(axis=0) - diff.min(axis=0)
        assert (span[1:] < CFG.image_size // 4).all()


def test_checkerboard_period():
    np.testing.assert_array_equal(checkerboard(4, 2), [[1, -1, 1, -1], [-1, 1, -1, 1]] * 2)
    assert checkerboard(8, 4)[0].tolist() == [1, 1, -1, -1, 1, 1, -1, -1]


def test_fakes_carry_more_high_frequency_energy():
    real = [high_frequency_fraction(generate_real(CFG, sample_seed(4, i))) for i in range(100)]
    fake = [high_frequency_fraction(generate_fake(CFG, sample_seed(4, i))) for i in range(100)]
    assert np.mean(fake) >= 2 * np.mean(real)


def test_high_frequency_threshold_separates_raw_but_not_degraded():
    real = [generate_real(CFG, sample_seed(5, i)) for i in range(200)]
    fake = [generate_fake(CFG, sample_seed(6, i)) for i in range(200)]
    raw_acc = best_threshold_accuracy([high_frequency_fraction(x) for x in real], [high_frequency_fraction(x) for x in fake])
    deg_acc = best_threshold_accuracy(
        [high_frequency_fraction(degrade(x)) for x in real], [high_frequency_fraction(degrade(x)) for x in fake]
    )
    assert raw_acc > 0.95
    assert deg_acc < raw_acc


def test_heavy_codec_removes_checkerboard_band():
    mask = checkerboard_band_mask(CFG.image_size, CFG.artifact_period)
    before = after = 0.0
    for i in range(100):
        fake = generate_fake(CFG, sample_seed(7, i))
        before += band_energy(fake, mask)
        after += band_energy(degrade(fake, "heavy"), mask)
    assert after <= 0.5 * before


def test_vanishing_quantization_is_identity():
    img = generate_fake(CFG, sample_seed(8, 0))
    assert np.abs(degrade(img, 1e-4) - img).max() < 1 / 255


def test_degrade_nearly_idempotent():
    close = []
    for i in range(100):
        once = degrade(generate_fake(CFG, sample_seed(9, i)), "heavy")
        close.append(np.abs(degrade(once, "heavy") - once) < 1 / 255)
    assert np.mean(close) >= 0.95


def test_degrade_contract():
    img = np.random.default_rng(0).uniform(size=(1, 16, 16)).astype(np.float32)
    out = degrade(img, "mild")
    assert out.dtype == np.float32 and out.shape == img.shape
    assert out.min() >= 0 and out.max() <= 1
    np.testing.assert_array_equal(out, degrade(img, "mild"))
    with pytest.raises(DimensionError):
        degrade(np.zeros((12, 12)))
    with pytest.raises(ConfigError):
        degrade(img, "extreme")


@pytest.mark.parametrize(
    "kwargs", [{"image_size": 30}, {"artifact_period": 1}, {"quality": "c40"}, {"num_per_class": (1, 2)}]
)
def test_gen_config_validation(kwargs):
    with pytest.raises(ConfigError):
        GenConfig(**kwargs)


def test_dataset_round_trip_and_determinism(tmp_path):
    cfg = GenConfig(num_per_class=(3, 2, 2), seed=5)
    ds = build_dataset(cfg, tmp_path / "a")
    build_dataset(cfg, tmp_path / "b")
    for split, n in zip(("train", "val", "test"), cfg.num_per_class):
        idx = ds.indices(split)
        assert (ds.labels[idx] == 0).sum() == n and (ds.labels[idx] == 1).sum() == n
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    loaded = load_dataset(tmp_path / "a")
    np.testing.assert_array_equal(loaded.raw, ds.raw)
    np.testing.assert_array_equal(loaded.deg, ds.deg)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and manifest["gen"]["seed"] == 5


def test_degraded_regenerates_bitwise_from_raw():
    ds = generate_dataset(GenConfig(num_per_class=(2, 1, 1), seed=3))
    for r, d in zip(ds.raw, ds.deg):
        np.testing.assert_array_equal(degrade(r, ds.quality), d)


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"schema_version": 99}))
    with pytest.raises(DataError):
        load_dataset(tmp_path)


def test_adt1_round_trip_and_errors(tmp_path):
    a = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    adt1.write(tmp_path / "a.adt1", a)
    np.testing.assert_array_equal(adt1.read(tmp_path / "a.adt1"), a)
    blob = adt1.encode(a)
    with pytest.raises(DataError):
        adt1.decode(b"XXXX" + blob[4:])
    with pytest.raises(DataError):
        adt1.decode(blob[:-4])
    with pytest.raises(DimensionError):
        adt1.encode(np.zeros((2, 2)))
