import numpy as np
import pytest

from primal_attention.rng import Rng, derive_seed

# Official vectors for the generator run from state [1, 2, 3, 4]
# (reference implementation at xoshiro.di.unimi.it, xoshiro256plusplus.c).
REFERENCE_FROM_STATE = [
    41943041,
    58720359,
    3588806011781223,
    3591011842654386,
    9228616714210784205,
    9973669472204895162,
    14011001112246962877,
    12406186145184390807,
    15849039046786891736,
    10450023813501588000,
]

# Cross-checked against an independent implementation of the same
# splitmix64-seeded construction (Rust rand 0.10.2, seed_from_u64).
SEEDED_VECTORS = {
    0: [5987356902031041503, 7051070477665621255, 6633766593972829180, 211316841551650330, 9136120204379184874],
    42: [15021278609987233951, 5881210131331364753, 18149643915985481100, 12933668939759105464, 14637574242682825331],
    1234567: [437095814655224680, 8127161015984454572, 18128670339019551454, 254746599813523466, 6010839568078443526],
}


def test_reference_vectors_from_state():
    rng = Rng.from_state([1, 2, 3, 4])
    assert [rng.next_u64() for _ in range(10)] == REFERENCE_FROM_STATE


@pytest.mark.parametrize("seed", sorted(SEEDED_VECTORS))
def test_seeded_stream_matches_independent_implementation(seed):
    rng = Rng(seed)
    assert [rng.next_u64() for _ in range(5)] == SEEDED_VECTORS[seed]


def test_same_seed_same_stream():
    a, b = Rng(987), Rng(987)
    assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]


def test_uniform_range():
    rng = Rng(3)
    values = [rng.uniform() for _ in range(2000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert 0.4 < np.mean(values) < 0.6


def test_below_is_in_bounds_and_deterministic():
    rng = Rng(11)
    draws = [rng.below(7) for _ in range(500)]
    assert set(draws) <= set(range(7))
    replay = Rng(11)
    assert draws == [replay.below(7) for _ in range(500)]
    with pytest.raises(ValueError):
        rng.below(0)


def test_sample_without_replacement():
    rng = Rng(5)
    sample = rng.sample_without_replacement(100, 30)
    assert len(sample) == 30
    assert len(set(sample)) == 30
    assert all(0 <= i < 100 for i in sample)
    assert Rng(5).sample_without_replacement(100, 30) == sample
    assert sorted(Rng(8).sample_without_replacement(10, 10)) == list(range(10))
    with pytest.raises(ValueError):
        rng.sample_without_replacement(5, 6)


def test_normals_moments():
    values = Rng(7).normals((4000,))
    assert abs(values.mean()) < 0.08
    assert abs(values.std() - 1.0) < 0.08


def test_uniform_symmetric_scale():
    values = Rng(9).uniform_symmetric(0.25, (1000,))
    assert np.all(np.abs(values) <= 0.25)
    assert values.min() < -0.1 and values.max() > 0.1


def test_derive_seed_is_stable_and_tag_sensitive():
    assert derive_seed(123, "a", 1) == derive_seed(123, "a", 1)
    assert derive_seed(123, "a", 1) != derive_seed(123, "a", 2)
    assert derive_seed(123, "a") != derive_seed(124, "a")
    r = Rng(55).derive("x")
    assert r.next_u64() == Rng(55).derive("x").next_u64()
