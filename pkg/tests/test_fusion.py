import numpy as np
import pytest

from sprayeval.errors import ContractError
from sprayeval.fusion import FusionMode, fuse
from sprayeval.tensors import argmax_mask, bilinear_resize


def _rand(shape, seed):
    return np.random.default_rng(seed).normal(size=shape).astype(np.float32)


def test_multi_with_unit_aux_is_identity():
    main = _rand((7, 4, 4), 0)
    for aux_shape in [(7, 4, 4), (7, 2, 2), (7, 9, 5)]:
        aux = np.ones(aux_shape, dtype=np.float32)
        assert np.array_equal(fuse(main, aux, FusionMode.MULTI), main)


def test_add_with_zero_aux_is_identity():
    main = _rand((7, 4, 4), 1)
    for aux_shape in [(7, 4, 4), (7, 2, 2), (7, 6, 8)]:
        aux = np.zeros(aux_shape, dtype=np.float32)
        assert np.array_equal(fuse(main, aux, FusionMode.ADD), main)


def test_add_equals_resize_then_add():
    main = _rand((7, 4, 4), 2)
    aux = _rand((7, 2, 2), 3)
    expected = main + bilinear_resize(aux, 4, 4)
    assert np.abs(fuse(main, aux, "add") - expected).max() < 1e-6


def test_out_returns_main_and_aux_returns_resized_aux():
    main = _rand((3, 5, 5), 4)
    aux = _rand((3, 2, 3), 5)
    assert np.array_equal(fuse(main, aux, "out"), main)
    assert np.array_equal(fuse(main, aux, "aux"), bilinear_resize(aux, 5, 5))


def test_out_argmax_invariance():
    for seed in range(10):
        main = _rand((7, 6, 6), seed)
        aux = _rand((7, 3, 3), seed + 100)
        assert np.array_equal(argmax_mask(fuse(main, aux, "out")),
                              argmax_mask(main))


def test_add_commutes_with_channel_permutation():
    rng = np.random.default_rng(11)
    main = _rand((7, 4, 4), 6)
    aux = _rand((7, 2, 2), 7)
    perm = rng.permutation(7)
    direct = fuse(main, aux, "add")[perm]
    permuted = fuse(main[perm], aux[perm], "add")
    assert np.abs(direct - permuted).max() < 1e-6


def test_multi_preserves_sign_with_nonnegative_aux():
    main = _rand((4, 5, 5), 8)
    aux = np.abs(_rand((4, 5, 5), 9)) + 0.1
    fused = fuse(main, aux, "multi")
    assert np.array_equal(np.sign(fused) == np.sign(main),
                          np.ones_like(main, dtype=bool))


def test_channel_mismatch_raises():
    with pytest.raises(ContractError):
        fuse(_rand((7, 4, 4), 0), _rand((6, 4, 4), 1), "add")


def test_prob_space_combines_probabilities():
    from sprayeval.tensors import softmax_channels

    main = _rand((5, 3, 3), 10)
    aux = _rand((5, 3, 3), 11)
    fused = fuse(main, aux, "add", space="prob")
    expected = softmax_channels(main) + softmax_channels(aux)
    assert np.abs(fused - expected).max() < 1e-6
    # OUT ignores the space switch
    assert np.array_equal(fuse(main, aux, "out", space="prob"), main)


def test_unknown_space_rejected():
    with pytest.raises(ContractError):
        fuse(_rand((2, 3, 3), 0), _rand((2, 3, 3), 1), "add", space="sqrt")
