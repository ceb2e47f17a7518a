import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specswd.errors import ConfigError, DegenerateInputError, DimensionError
from specswd.gradcheck import mv_suite
from specswd.multiview import (
    MultiViewConfig,
    ProjectionSet,
    attention_vectors,
    bin_assignment,
    brute_force_binned_distance,
    group_sizes,
    mv_loss,
    normalize_density,
    project_sort_bin,
    sample_projections,
    swd,
)

shapes = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
positive = st.floats(0.01, 5, allow_nan=False)


@st.composite
def density_pair(draw):
    shape = draw(shapes)
    a = draw(arrays(np.float64, shape, elements=positive))
    b = draw(arrays(np.float64, shape, elements=positive))
    return normalize_density(a), normalize_density(b)


def one_view(theta) -> ProjectionSet:
    return ProjectionSet(np.asarray([theta], dtype=np.float64), seed=-1)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_density(np.array([[[3.0, 4.0]]])), [[[9 / 25, 16 / 25]]])
    a = np.random.default_rng(0).normal(size=(2, 2, 2))
    np.testing.assert_allclose(normalize_density(2 * a), normalize_density(a), rtol=1e-15)
    p = normalize_density(a)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(p, a**2 / (a**2).sum())


def test_normalize_rejects_zero():
    with pytest.raises(DegenerateInputError):
        normalize_density(np.zeros((1, 2, 2)))


def test_projection_properties():
    a = sample_projections(50, 9)
    b = sample_projections(50, 9)
    np.testing.assert_array_equal(a.directions, b.directions)
    np.testing.assert_allclose(np.linalg.norm(a.directions, axis=1), 1.0, atol=1e-12)
    big = sample_projections(10000, 1)
    assert np.linalg.norm(big.directions.mean(axis=0)) < 0.05


def test_group_sizes_put_extra_first():
    np.testing.assert_array_equal(group_sizes(10, 4), [3, 3, 2, 2])
    assert group_sizes(7, 7).tolist() == [1] * 7


def test_bin_example_from_hand_enumeration():
    p = np.array([[[0.1, 0.2], [0.3, 0.4]]])
    np.testing.assert_allclose(project_sort_bin(p, [0, 1, 0], 2).bin_mass, [0.3, 0.7])


def test_swd_worked_example():
    p_s = np.array([[[0.2, 0.8]]])
    p_t = np.array([[[0.5, 0.5]]])
    assert swd(p_s, p_t, one_view([0, 0, 1]), 2) == pytest.approx(0.18, rel=1e-12)
    assert brute_force_binned_distance(p_s, p_t, [0, 0, 1], 2) == pytest.approx(0.18, rel=1e-12)


def test_mv_loss_composition_example():
    # sqrt of a density is a tensor whose normalized square is that density
    a_s = np.sqrt([[[0.2, 0.8]]])
    a_t = np.sqrt([[[0.5, 0.5]]])
    a_neg = np.sqrt([[[0.7, 0.3]]])
    proj = one_view([0, 0, 1])
    assert swd(normalize_density(a_s), normalize_density(a_neg), proj, 2) == pytest.approx(0.5)
    loss = mv_loss(a_s, a_t, a_t, a_neg, MultiViewConfig(k=1, g=2), proj=proj)
    assert float(loss.data) == pytest.approx(27.0, rel=1e-12)


@given(density_pair())
def test_identity_nonnegativity_symmetry(pair):
    p, q = pair
    proj = sample_projections(8, 3)
    g = max(1, p.shape[0] // 2)
    assert swd(p, p, proj, g) == 0.0
    assert swd(p, q, proj, g) >= 0.0
    assert swd(p, q, proj, g) == pytest.approx(swd(q, p, proj, g), abs=1e-15)


@given(density_pair(), st.integers(1, 8))
def test_bins_conserve_mass(pair, g):
    p, _ = pair
    g = min(g, p.size)
    v = attention_vectors(p, sample_projections(5, 0), g)
    np.testing.assert_allclose(v.sum(axis=1), 1.0, atol=1e-12)


@given(density_pair())
def test_axis_projections_recover_marginals(pair):
    p, _ = pair
    c, w, h = p.shape
    np.testing.assert_allclose(project_sort_bin(p, [1, 0, 0], c).bin_mass, p.sum(axis=(1, 2)), atol=1e-14)
    np.testing.assert_allclose(project_sort_bin(p, [0, 1, 0], w).bin_mass, p.sum(axis=(0, 2)), atol=1e-14)
    np.testing.assert_allclose(project_sort_bin(p, [0, 0, 1], h).bin_mass, p.sum(axis=(0, 1)), atol=1e-14)


@settings(max_examples=50)
@given(density_pair(), st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_matches_brute_force_oracle(pair, seed, g):
    p, q = pair
    g = min(g, p.size)
    proj = sample_projections(4, seed)
    expect = sum(brute_force_binned_distance(p, q, th, g) for th in proj.directions)
    assert swd(p, q, proj, g) == pytest.approx(expect, abs=1e-12)


def test_bin_assignment_ignores_masses_and_breaks_ties_by_index():
    bins = bin_assignment((2, 2, 2), np.array([1.0, 0, 0]), 2)
    np.testing.assert_array_equal(bins, [0, 0, 0, 0, 1, 1, 1, 1])
    bins = bin_assignment((1, 1, 3), np.array([0, 0, 0.0]), 2)  # all tied
    np.testing.assert_array_equal(bins, [0, 0, 1])


@given(st.floats(0.1, 10))
def test_mv_loss_scale_invariance(lam):
    rng = np.random.default_rng(5)
    a_s, a_t, a_p, a_n = rng.normal(size=(4, 4, 3, 3))
    cfg = MultiViewConfig(k=8, g=2, margin=1.0)
    base = float(mv_loss(a_s, a_t, a_p, a_n, cfg).data)
    assert float(mv_loss(lam * a_s, a_t, a_p, a_n, cfg).data) == pytest.approx(base, rel=1e-10)


def test_hinge_inactive_beyond_margin():
    rng = np.random.default_rng(6)
    a_s, a_t, a_p, a_n = rng.normal(size=(4, 4, 3, 3))
    proj = sample_projections(16, 1)
    cfg = MultiViewConfig(k=16, g=2, margin=0.0)
    expect = 100 * swd(normalize_density(a_s), normalize_density(a_t), proj, 2) + 50 * swd(
        normalize_density(a_s), normalize_density(a_p), proj, 2
    )
    assert float(mv_loss(a_s, a_t, a_p, a_n, cfg, proj=proj).data) == pytest.approx(expect, rel=1e-12)


def test_monte_carlo_stability():
    rng = np.random.default_rng(7)
    p, q = (normalize_density(x) for x in rng.normal(size=(2, 4, 4, 4)))
    vals = [swd(p, q, sample_projections(128, s), 2) / 128 for s in range(20)]
    assert np.std(vals) < 0.2 * np.mean(vals)


def test_mv_gradient():
    rep = mv_suite(np.random.default_rng(8))["mv_loss"]
    assert rep.passed(1e-3)


def test_errors():
    with pytest.raises(DimensionError):
        swd(np.ones((1, 2, 2)) / 4, np.ones((1, 2, 1)) / 2, sample_projections(1, 0), 1)
    with pytest.raises(ConfigError):
        project_sort_bin(np.ones((1, 1, 2)) / 2, [1, 0, 0], 3)
    with pytest.raises(ConfigError):
        mv_loss(np.ones((1, 2, 2)), np.ones((1, 2, 2)), cfg=MultiViewConfig(k=1, g=1))
    for bad in ({"k": 0}, {"g": 0}, {"margin": -1.0}):
        with pytest.raises(ConfigError):
            MultiViewConfig(**bad)


def test_batched_loss_is_mean():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(4, 3, 4, 3, 3))
    cfg = MultiViewConfig(k=8, g=2)
    batch = float(mv_loss(*a, cfg).data)
    each = [float(mv_loss(*(x[i] for x in a), cfg).data) for i in range(3)]
    assert batch == pytest.approx(np.mean(each), rel=1e-12)
