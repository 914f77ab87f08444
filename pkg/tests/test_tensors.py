import numpy as np
import pytest

from sprayeval.errors import (ContractError, TensorCorruptionError,
                              TensorFormatError)
from sprayeval.tensors import (DEFAULT_CLASSES, ClassTable, argmax_mask,
                               bilinear_resize, mask_from_bytes, mask_to_bytes,
                               minmax_normalize, percentile, read_mask,
                               read_tensor, softmax_channels, tensor_to_bytes,
                               write_mask, write_tensor)


# ---------------------------------------------------------------------------
# TNSR / LMSK container
# ---------------------------------------------------------------------------

def test_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.normal(size=(3, 4, 5)).astype(np.float32)
    path = tmp_path / "t.tnsr"
    write_tensor(t, path)
    back = read_tensor(path)
    assert back.shape == (3, 4, 5)
    assert back.dtype == np.float32
    assert np.array_equal(back, t)


@pytest.mark.parametrize("shape", [(1, 1), (2, 3), (7, 16, 16), (16, 512, 512)])
def test_roundtrip_across_shapes(tmp_path, shape):
    rng = np.random.default_rng(hash(shape) % (2**32))
    t = rng.normal(size=shape).astype(np.float32)
    path = tmp_path / "t.tnsr"
    write_tensor(t, path)
    assert np.array_equal(read_tensor(path), t)


def test_payload_length_mismatch_is_corruption(tmp_path):
    t = np.zeros((2, 2), dtype=np.float32)
    blob = tensor_to_bytes(t)
    path = tmp_path / "bad.tnsr"
    # header promises 4 floats; hand it 3
    path.write_bytes(blob[:16] + blob[16:16 + 12])
    with pytest.raises(TensorCorruptionError):
        read_tensor(path)


def test_empty_file_is_format_error(tmp_path):
    path = tmp_path / "empty.tnsr"
    path.write_bytes(b"")
    with pytest.raises(TensorFormatError):
        read_tensor(path)


def test_bad_magic_version_rank(tmp_path):
    good = tensor_to_bytes(np.zeros((2, 2), dtype=np.float32))
    for mutated in (b"XXXX" + good[4:],                # magic
                    good[:4] + b"\x09" + good[5:],     # version
                    good[:5] + b"\x05" + good[6:],     # rank
                    good[:6] + b"\x01\x00" + good[8:]):  # reserved
        path_bytes = mutated
        with pytest.raises(TensorFormatError):
            from sprayeval.tensors import tensor_from_bytes
            tensor_from_bytes(path_bytes)


def test_nonfinite_payload_is_corruption():
    from sprayeval.tensors import tensor_from_bytes
    t = np.ones((2, 2), dtype=np.float32)
    blob = bytearray(tensor_to_bytes(t))
    blob[16:20] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(TensorCorruptionError):
        tensor_from_bytes(bytes(blob))


def test_writes_are_deterministic(tmp_path):
    t = np.arange(12, dtype=np.float32).reshape(3, 4) / 7.0
    a, b = tmp_path / "a.tnsr", tmp_path / "b.tnsr"
    write_tensor(t, a)
    write_tensor(t.copy(), b)
    assert a.read_bytes() == b.read_bytes()


def test_single_element_tensor_has_one_payload_float(tmp_path):
    t = np.zeros((1, 1, 1), dtype=np.float32)
    path = tmp_path / "one.tnsr"
    write_tensor(t, path)
    # magic+version+rank+reserved = 8, three u32 extents = 12, one f32 = 4
    assert path.stat().st_size == 8 + 12 + 4


def test_write_rejects_nonfinite_tensor(tmp_path):
    t = np.full((2, 2), np.inf, dtype=np.float32)
    with pytest.raises(ContractError):
        write_tensor(t, tmp_path / "x.tnsr")


def test_mask_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    m = rng.integers(0, 7, size=(9, 11)).astype(np.uint8)
    path = tmp_path / "m.lmsk"
    write_mask(m, path)
    assert np.array_equal(read_mask(path), m)


def test_mask_length_mismatch_is_corruption():
    m = np.zeros((2, 3), dtype=np.uint8)
    blob = mask_to_bytes(m)
    with pytest.raises(TensorCorruptionError):
        mask_from_bytes(blob[:-1])


# ---------------------------------------------------------------------------
# bilinear_resize
# ---------------------------------------------------------------------------

def _bilinear_reference(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Direct per-pixel evaluation of the half-pixel bilinear formula."""
    h, w = a.shape
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        y = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h - 1)
        dy = y - y0
        for j in range(out_w):
            x = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w - 1)
            dx = x - x0
            out[i, j] = ((1 - dy) * (1 - dx) * a[y0, x0]
                         + (1 - dy) * dx * a[y0, x1]
                         + dy * (1 - dx) * a[y1, x0]
                         + dy * dx * a[y1, x1])
    return out


def test_resize_to_same_size_is_identity():
    rng = np.random.default_rng(1)
    t = rng.normal(size=(2, 5, 7)).astype(np.float32)
    out = bilinear_resize(t, 5, 7)
    assert np.abs(out - t).max() < 1e-6


def test_resize_constant_stays_constant_exactly():
    t = np.full((1, 3, 4), 3.5, dtype=np.float32)
    out = bilinear_resize(t, 9, 13)
    assert np.array_equal(out, np.full((1, 9, 13), 3.5, dtype=np.float32))


def test_resize_2x2_to_4x4_matches_hand_grid():
    t = np.array([[[0.0, 1.0], [2.0, 3.0]]], dtype=np.float32)
    out = bilinear_resize(t, 4, 4)
    # the map (y, x) -> 2y + x evaluated on clamped half-pixel coordinates
    expected = np.array([
        [0.00, 0.25, 0.75, 1.00],
        [0.50, 0.75, 1.25, 1.50],
        [1.50, 1.75, 2.25, 2.50],
        [2.00, 2.25, 2.75, 3.00],
    ], dtype=np.float32)
    assert np.abs(out[0] - expected).max() < 1e-6
    assert np.abs(out[0] - _bilinear_reference(t[0].astype(np.float64), 4, 4)).max() < 1e-6


@pytest.mark.parametrize("shape,target", [((5, 9), (12, 4)), ((8, 8), (3, 17)),
                                          ((2, 13), (13, 2))])
def test_resize_matches_reference(shape, target):
    rng = np.random.default_rng(shape[0] * 31 + target[0])
    t = rng.normal(size=shape).astype(np.float32)
    out = bilinear_resize(t, *target)
    ref = _bilinear_reference(t.astype(np.float64), *target)
    assert np.abs(out - ref).max() < 1e-5


def test_resize_preserves_bounds():
    rng = np.random.default_rng(9)
    for _ in range(25):
        t = rng.normal(size=(2, 6, 7)).astype(np.float32)
        out = bilinear_resize(t, int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        assert out.min() >= t.min() - 1e-6
        assert out.max() <= t.max() + 1e-6


def test_resize_rejects_bad_target():
    with pytest.raises(ContractError):
        bilinear_resize(np.zeros((2, 2), dtype=np.float32), 0, 3)


# ---------------------------------------------------------------------------
# softmax / argmax / percentile / minmax
# ---------------------------------------------------------------------------

def test_softmax_uniform_on_zero_logits():
    out = softmax_channels(np.zeros((7, 3, 3), dtype=np.float32))
    assert np.abs(out - 1.0 / 7.0).max() < 1e-6


def test_softmax_extreme_logits_do_not_overflow():
    t = np.zeros((2, 1, 1), dtype=np.float32)
    t[0] = 1000.0
    out = softmax_channels(t)
    assert np.isfinite(out).all()
    assert out[0, 0, 0] == pytest.approx(1.0)
    assert out[1, 0, 0] == pytest.approx(0.0)


def test_softmax_matches_float64_reference():
    rng = np.random.default_rng(5)
    t = rng.normal(scale=3.0, size=(3, 2, 2)).astype(np.float32)
    out = softmax_channels(t)
    z = t.astype(np.float64)
    ref = np.exp(z) / np.exp(z).sum(axis=0, keepdims=True)
    assert np.abs(out - ref).max() < 1e-6


def test_softmax_sums_to_one_even_for_huge_logits():
    rng = np.random.default_rng(6)
    t = rng.uniform(-1e4, 1e4, size=(7, 4, 4)).astype(np.float32)
    out = softmax_channels(t)
    assert np.abs(out.sum(axis=0) - 1.0).max() < 1e-5


def test_argmax_one_hot_and_ties():
    t = np.zeros((3, 2, 2), dtype=np.float32)
    t[2, 0, 0] = 1.0
    t[1, 1, 1] = 1.0
    mask = argmax_mask(t)
    assert mask[0, 0] == 2 and mask[1, 1] == 1
    assert mask[0, 1] == 0 and mask[1, 0] == 0  # all-equal ties go to class 0
    assert (argmax_mask(np.ones((4, 3, 3), dtype=np.float32)) == 0).all()


def test_argmax_matches_brute_force_scan():
    rng = np.random.default_rng(7)
    for _ in range(50):
        t = rng.normal(size=(7, 8, 8)).astype(np.float32)
        mask = argmax_mask(t)
        for r in range(8):
            for c in range(8):
                best = 0
                for k in range(1, 7):
                    if t[k, r, c] > t[best, r, c]:
                        best = k
                assert mask[r, c] == best


def test_percentile_cases():
    assert percentile([1, 2, 3, 4, 5], 50) == pytest.approx(3.0)
    assert percentile([0, 10], 90) == pytest.approx(9.0)
    assert percentile([42.5], 13.0) == pytest.approx(42.5)
    with pytest.raises(ValueError):
        percentile([], 50)


def test_minmax_cases():
    out = minmax_normalize(np.array([[2.0, 4.0, 6.0]], dtype=np.float32))
    assert np.allclose(out, [[0.0, 0.5, 1.0]])
    const = minmax_normalize(np.full((3, 3), 5.0, dtype=np.float32))
    assert np.array_equal(const, np.zeros((3, 3), dtype=np.float32))
    rng = np.random.default_rng(8)
    t = rng.normal(size=(4, 5)).astype(np.float32)
    expected = (t - t.min()) / (t.max() - t.min())
    assert np.abs(minmax_normalize(t) - expected).max() < 1e-6


# ---------------------------------------------------------------------------
# ClassTable
# ---------------------------------------------------------------------------

def test_default_class_table():
    assert DEFAULT_CLASSES.num_classes == 7
    assert DEFAULT_CLASSES.base_of(4) == 1
    assert DEFAULT_CLASSES.base_of(6) == 3
    assert DEFAULT_CLASSES.sprayed_ids == (4, 5, 6)
    assert DEFAULT_CLASSES.name_of(0) == "background"


def test_class_table_rejects_background_pairing():
    with pytest.raises(ContractError):
        ClassTable(names=("background", "a", "sprayed_a"), sprayed_pair={2: 0})


def test_class_table_rejects_non_injective_pairs():
    with pytest.raises(ContractError):
        ClassTable(names=("bg", "a", "sa", "sb"), sprayed_pair={2: 1, 3: 1})
