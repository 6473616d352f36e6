import numpy as np

from atmos_hijack.prng import MASK64, SplitMix64, derive_seed, fnv1a64, mix64

# first outputs of the published splitmix64 reference for seed 0
REFERENCE_SEED0 = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_matches_published_reference():
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == REFERENCE_SEED0


def test_vectorized_floats_equal_scalar_stream():
    a, b = SplitMix64(987654321), SplitMix64(987654321)
    scalars = np.array([a.next_float() for _ in range(1000)])
    assert np.array_equal(scalars, b.floats(1000))
    # stream position advances identically
    assert a.next_u64() == b.next_u64()


def test_floats_in_unit_interval():
    vals = SplitMix64(3).floats(10000)
    assert vals.min() >= 0.0 and vals.max() < 1.0
    assert abs(vals.mean() - 0.5) < 0.02


def test_uniform_and_randint_bounds():
    rng = SplitMix64(5)
    for _ in range(1000):
        assert 2.0 <= rng.uniform(2.0, 3.5) <= 3.5
        assert rng.randint(4, 9) in range(4, 10)


def test_randint_hits_all_values():
    rng = SplitMix64(6)
    seen = {rng.randint(0, 3) for _ in range(200)}
    assert seen == {0, 1, 2, 3}


def test_normal_moments():
    rng = SplitMix64(7)
    draws = np.array([rng.normal() for _ in range(20000)])
    assert abs(draws.mean()) < 0.03
    assert abs(draws.std() - 1.0) < 0.03


def test_sample_indices_uniform_and_sorted():
    rng = SplitMix64(8)
    picks = rng.sample_indices(50, 10)
    assert picks == sorted(picks)
    assert len(set(picks)) == 10
    assert all(0 <= p < 50 for p in picks)


def test_fnv1a64_known_value():
    # FNV-1a 64-bit of empty input is the offset basis
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64("a") == ((0xCBF29CE484222325 ^ ord("a")) * 0x100000001B3) & MASK64


def test_derive_seed_stable_and_distinct():
    s1 = derive_seed(42, "query", "q001")
    assert s1 == derive_seed(42, "query", "q001")
    assert s1 != derive_seed(42, "query", "q002")
    assert s1 != derive_seed(43, "query", "q001")
    assert 0 <= s1 <= MASK64


def test_mix64_is_deterministic_permutation_sample():
    outs = {mix64(i) for i in range(1000)}
    assert len(outs) == 1000
