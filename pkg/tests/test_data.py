import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpmgan.data import (NoiseSpec, Rng, derive_seed, make_labeled_blobs, make_ring_mixture, sample_noise,
                         write_dataset_csv)

MASK = (1 << 64) - 1


def splitmix64_reference(seed, n):
    """Plain-integer SplitMix64."""
    out, s = [], seed & MASK
    for _ in range(n):
        s = (s + 0x9E3779B97F4A7C15) & MASK
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_known_answer():
    assert int(Rng(0).next_u64(1)[0]) == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("seed", [0, 1, 42, 2**63 + 5, MASK])
def test_splitmix_matches_reference_across_calls(seed):
    rng = Rng(seed)
    got = list(rng.next_u64(3)) + list(rng.next_u64(4))
    assert [int(v) for v in got] == splitmix64_reference(seed, 7)


def test_uniform_support():
    x = sample_noise(NoiseSpec("uniform_pm1", 4), 2500, Rng(9)).values
    assert x.shape == (2500, 4)
    assert x.min() >= -1 and x.max() <= 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, MASK), batch=st.integers(1, 64), dim=st.integers(1, 9))
def test_uniform_never_leaves_unit_box(seed, batch, dim):
    x = sample_noise(NoiseSpec("uniform_pm1", dim), batch, Rng(seed)).values
    assert np.all(np.abs(x) <= 1)


def test_normal_moments():
    n = 10**5
    x = sample_noise(NoiseSpec("normal01", 2), n, Rng(123)).values
    # 3-sigma bounds: sd(mean) = 1/sqrt(n) ~ 0.0032, sd(var) = sqrt(2/n) ~ 0.0045.
    assert 3 / np.sqrt(n) < 0.02 and 3 * np.sqrt(2 / n) < 0.03
    assert np.all(np.abs(x.mean(axis=0)) < 0.02)
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.03)


@pytest.mark.parametrize("kind", ["uniform_pm1", "normal01"])
def test_noise_determinism(kind):
    a = sample_noise(NoiseSpec(kind, 3), 50, Rng(5)).values
    b = sample_noise(NoiseSpec(kind, 3), 50, Rng(5)).values
    assert a.tobytes() == b.tobytes()


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("cauchy", 2)
    with pytest.raises(ValueError):
        NoiseSpec("normal01", 0)
    with pytest.raises(ValueError):
        sample_noise(NoiseSpec("normal01", 2), 0, Rng(0))


def test_split_streams_are_independent_of_parent_progress():
    parent = Rng(7)
    child = parent.split("g1")
    assert parent.state == 7
    assert child.state == derive_seed(7, "g1")
    assert derive_seed(7, "g1") != derive_seed(7, "g2")


def test_single_mode_at_origin():
    ds = make_ring_mixture(1, 0.0, 1e-4, 500, Rng(0))
    assert np.abs(ds.samples.values).max() < 1e-3
    assert set(ds.labels) == {0}


def test_ring_centers():
    ds = make_ring_mixture(8, 2.0, 0.02, 10, Rng(0))
    np.testing.assert_allclose(ds.centers[0], [2, 0], atol=1e-12)
    np.testing.assert_allclose(ds.centers[2], [0, 2], atol=1e-12)


def test_ring_label_balance():
    ds = make_ring_mixture(8, 2.0, 0.02, 8000, Rng(2024))
    counts = np.bincount(ds.labels, minlength=8)
    # Binomial(8000, 1/8): sd ~ 29.6, 3 sd ~ 89 < 120.
    assert 3 * np.sqrt(8000 / 8 * 7 / 8) < 120
    assert np.all(np.abs(counts - 1000) <= 120)


@settings(max_examples=20, deadline=None)
@given(k=st.integers(1, 12), radius=st.floats(0.5, 5), seed=st.integers(0, 2**32))
def test_ring_labels_round_trip_when_separated(k, radius, seed):
    sigma = radius * np.sin(np.pi / k) / 6 if k > 1 else 0.1
    ds = make_ring_mixture(k, radius, sigma, 400, Rng(seed))
    assert ds.labels.min() >= 0 and ds.labels.max() < k
    d = np.linalg.norm(ds.samples.values[:, None] - ds.centers[None], axis=2)
    # At sigma <= r sin(pi/k)/6 a mislabel needs a >3-sigma excursion; allow that rare tail.
    assert np.mean(d.argmin(axis=1) == ds.labels) > 0.99


def test_dataset_is_pure_function_of_inputs():
    a = make_ring_mixture(8, 2.0, 0.02, 100, Rng(3))
    b = make_ring_mixture(8, 2.0, 0.02, 100, Rng(3))
    assert a.samples.values.tobytes() == b.samples.values.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()


def test_blobs_default_and_explicit_centers():
    ds = make_labeled_blobs(3, 0.1, 300, Rng(1))
    assert ds.centers.shape == (3, 2) and set(ds.labels) == {0, 1, 2}
    ds = make_labeled_blobs(2, 0.1, 50, Rng(1), centers=[[0, 0], [5, 5]])
    np.testing.assert_array_equal(ds.centers, [[0, 0], [5, 5]])


def test_dataset_csv_export(tmp_path):
    ds = make_ring_mixture(4, 1.0, 0.05, 20, Rng(0))
    path = tmp_path / "d.csv"
    write_dataset_csv(ds, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["x0", "x1", "label"]
    assert len(rows) == 21
    assert [int(r[2]) for r in rows[1:]] == list(ds.labels)
    np.testing.assert_allclose([[float(r[0]), float(r[1])] for r in rows[1:]], ds.samples.values, rtol=1e-5)
