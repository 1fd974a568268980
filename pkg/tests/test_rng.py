"""Stream derivation, replayability, and block-split invariance."""

import numpy as np
import pytest

from ergodiff import rng


def test_stream_replay():
    a = rng.stream(123, 4).standard_normal(32)
    b = rng.stream(123, 4).standard_normal(32)
    c = rng.stream(123, 5).standard_normal(32)
    assert (a == b).all()
    assert not (a == c).all()


def test_derive_seed_stable_values():
    # frozen: derivation must never change between runs or platforms
    assert rng.derive_seed(0) == rng.derive_seed(0)
    assert rng.derive_seed(1, "poisson", 3) == rng.derive_seed(1, "poisson", 3)
    assert rng.derive_seed(1, "poisson", 3) != rng.derive_seed(1, "poisson", 4)
    assert rng.derive_seed(1, "a") != rng.derive_seed(1, "b")
    with pytest.raises(TypeError):
        rng.derive_seed(1, 3.5)


def test_ensemble_noise_block_split_invariance():
    full = rng.EnsembleNoise(9, 3, 2).block(50)
    sup = rng.EnsembleNoise(9, 3, 2)
    parts = np.concatenate([sup.block(13), sup.block(17), sup.block(20)], axis=0)
    assert (full == parts).all()


def test_pooled_noise_block_split_invariance():
    full = rng.PooledNoise(9, 1, 4, 1).block(40)
    sup = rng.PooledNoise(9, 1, 4, 1)
    parts = np.concatenate([sup.block(10), sup.block(30)], axis=0)
    assert (full == parts).all()


def test_grouped_noise_matches_pooled_per_stream():
    keys = [(11, 0), (12, 0)]
    grouped = rng.GroupedNoise(keys, 5, 1).block(20)
    a = rng.PooledNoise(11, 0, 5, 1).block(20)
    b = rng.PooledNoise(12, 0, 5, 1).block(20)
    assert (grouped[:, :5, :] == a).all()
    assert (grouped[:, 5:, :] == b).all()
