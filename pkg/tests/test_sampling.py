import numpy as np
import pytest
from hypothesis import given, strategies as st

from evadkit.sampling import (DensityProfile, EDSConfig, density_from_counts, eds_sample, nucleus_partition,
                              read_samples, uniform_sample, weighted_sample_without_replacement, write_samples)


@pytest.mark.parametrize("counts, expected", [
    ([2, 3, 5], [0.2, 0.3, 0.5]),
    ([7], [1.0]),
    ([1, 1, 1, 1], [0.25] * 4),
])
def test_density_examples(counts, expected):
    assert density_from_counts(counts).d == pytest.approx(expected, rel=1e-12)


def test_all_zero_counts_is_an_error():
    with pytest.raises(ValueError):
        density_from_counts([0, 0, 0])


def test_nucleus_partition_strictly_exceeds_tau():
    # cumulative 0.5, 0.8, 0.95, 0.99: 0.95 does not strictly exceed 0.95
    high, low = nucleus_partition(np.array([0.5, 0.3, 0.15, 0.04, 0.01]), 0.95)
    assert high.tolist() == [0, 1, 2, 3]
    assert low.tolist() == [4]


def test_uniform_profile_puts_every_frame_in_high_set():
    high, low = nucleus_partition(np.full(10, 0.1), 0.95)
    assert sorted(high.tolist()) == list(range(10))
    assert low.size == 0


def test_tiny_tau_keeps_only_densest_frame():
    high, _ = nucleus_partition(np.array([0.2, 0.5, 0.3]), 1e-9)
    assert high.tolist() == [1]


def test_ties_broken_by_lower_index():
    high, _ = nucleus_partition(np.array([0.25, 0.25, 0.25, 0.25]), 0.3)
    assert high.tolist() == [0, 1]


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30).filter(lambda v: sum(v) > 0),
       st.floats(0.01, 0.99))
def test_partition_is_minimal_prefix(raw, tau):
    d = np.array(raw) / sum(raw)
    high, low = nucleus_partition(d, tau)
    assert sorted(high.tolist() + low.tolist()) == list(range(d.size))
    if d[high].sum() > tau + 1e-9:
        assert d[high[:-1]].sum() <= tau + 1e-9
    if low.size and high.size:
        assert d[low].max() <= d[high].min()


def test_eds_identity_when_count_equals_length():
    s = eds_sample(density_from_counts([1, 5, 2, 2]), EDSConfig(sample_count=4))
    assert s.indices.tolist() == [0, 1, 2, 3]
    assert not s.truncated


def test_eds_truncates_when_count_exceeds_length():
    s = eds_sample(density_from_counts([1, 5, 2]), EDSConfig(sample_count=10))
    assert s.indices.tolist() == [0, 1, 2]
    assert s.truncated


def test_eds_is_deterministic():
    prof = density_from_counts(np.arange(1, 41))
    a = eds_sample(prof, EDSConfig(sample_count=12, seed=3))
    b = eds_sample(prof, EDSConfig(sample_count=12, seed=3))
    assert a == b


def test_quota_shortfall_spills_to_low_set():
    prof = DensityProfile(np.array([0.98, 0.01, 0.01]))
    s = eds_sample(prof, EDSConfig(tau=0.95, sample_count=2, ratio_high=0.8, seed=0))
    assert 0 in s.indices.tolist()
    assert s.n_high == 1 and s.n_low == 1
    assert dict(zip(s.indices.tolist(), s.provenance))[0] == "high"


@given(st.lists(st.integers(0, 50), min_size=2, max_size=40).filter(lambda v: sum(v) > 0),
       st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_eds_sample_shape(counts, k, seed):
    prof = density_from_counts(counts)
    s = eds_sample(prof, EDSConfig(sample_count=k, seed=seed))
    assert s.indices.size == min(k, len(counts))
    assert np.all(np.diff(s.indices) > 0)
    assert len(s.provenance) == s.indices.size


def test_weighted_draw_prefers_heavy_items():
    rng = np.random.default_rng(0)
    firsts = [weighted_sample_without_replacement(np.array([0.7, 0.2, 0.1]), 1, rng)[0] for _ in range(4000)]
    freq = np.bincount(firsts, minlength=3) / 4000
    assert freq == pytest.approx([0.7, 0.2, 0.1], abs=0.03)


def test_weighted_draw_without_replacement_and_zero_weights():
    rng = np.random.default_rng(1)
    out = weighted_sample_without_replacement(np.array([0.0, 0.0, 0.0]), 3, rng)
    assert sorted(out.tolist()) == [0, 1, 2]
    out = weighted_sample_without_replacement(np.array([1.0, 0.0, 2.0]), 3, rng)
    assert sorted(out.tolist()) == [0, 1, 2]
    assert out[2] == 1


def test_uniform_sample_is_evenly_spaced():
    assert uniform_sample(16, 4).tolist() == [2, 6, 10, 14]
    assert uniform_sample(3, 5).tolist() == [0, 1, 2]


def test_samples_file_round_trip(tmp_path):
    s = eds_sample(density_from_counts(np.arange(1, 21)), EDSConfig(sample_count=6, seed=2))
    write_samples(s, tmp_path / "s.txt")
    r = read_samples(tmp_path / "s.txt", seed=2)
    assert r.indices.tolist() == s.indices.tolist() and r.provenance == s.provenance
