import numpy as np
import pytest

from econet.haarlike import (Box, HaarBank, HaarDescriptor, default_bank,
                             haar_feature_volume, haar_features, haar_features_at,
                             integral_volume)
from econet.volume import Volume3D


def naive_box_mean(patch, box):
    ox, oy, oz = box.offset
    ex, ey, ez = box.extent
    total = 0.0
    for i in range(ox, ox + ex):
        for j in range(oy, oy + ey):
            for k in range(oz, oz + ez):
                total += float(patch[i, j, k])
    return total / (ex * ey * ez)


def test_constant_patch():
    bank = default_bank(window=7, size=24, seed=0)
    patch = np.full((7, 7, 7), 3.25)
    feats = haar_features(patch, bank)
    for d, f in zip(bank.descriptors, feats):
        if d.box_b is None:
            assert abs(f - 3.25) < 1e-12
        else:
            assert abs(f) < 1e-12


def test_center_voxel_feature():
    bank = HaarBank(window=5, descriptors=(HaarDescriptor(Box((2, 2, 2), (1, 1, 1))),))
    rng = np.random.default_rng(0)
    patch = rng.random((5, 5, 5))
    assert haar_features(patch, bank)[0] == patch[2, 2, 2]


def test_features_match_naive_oracle():
    rng = np.random.default_rng(1)
    bank = default_bank(window=7, size=40, seed=3)
    patch = rng.random((7, 7, 7))
    feats = haar_features(patch, bank)
    for d, f in zip(bank.descriptors, feats):
        ref = naive_box_mean(patch, d.box_a)
        if d.box_b is not None:
            ref -= naive_box_mean(patch, d.box_b)
        assert abs(f - ref) < 1e-12


def test_batch_shape():
    bank = default_bank(window=5, size=16, seed=0)
    rng = np.random.default_rng(2)
    feats = haar_features(rng.random((9, 5, 5, 5)), bank)
    assert feats.shape == (9, 16)


def test_size_mismatch():
    bank = default_bank(window=7, size=8, seed=0)
    with pytest.raises(ValueError, match="window"):
        haar_features(np.zeros((5, 5, 5)), bank)


def test_bank_box_validation():
    with pytest.raises(ValueError, match="fit"):
        HaarBank(window=5, descriptors=(HaarDescriptor(Box((3, 0, 0), (3, 1, 1))),))


def test_default_bank_structure():
    bank = default_bank(window=7, size=64, seed=0)
    assert len(bank) == 64
    # whole-window mean first, center voxel after the structured block
    assert bank.descriptors[0].box_a == Box((0, 0, 0), (7, 7, 7))
    assert bank.descriptors[0].box_b is None
    assert bank.descriptors[18].box_a == Box((3, 3, 3), (1, 1, 1))
    # deterministic for a given seed
    again = default_bank(window=7, size=64, seed=0)
    assert again == bank
    assert default_bank(window=7, size=64, seed=1) != bank


def test_bank_json_round_trip():
    bank = default_bank(window=5, size=20, seed=4)
    assert HaarBank.from_json(bank.to_json()) == bank


def test_integral_volume_simple():
    data = np.ones((3, 3, 3))
    iv = integral_volume(data)
    assert iv[3, 3, 3] == 27
    assert iv[1, 1, 1] == 1
    assert iv[0].sum() == 0


def test_feature_volume_matches_per_voxel(small_texture_phantom):
    v, _ = small_texture_phantom
    bank = default_bank(window=5, size=12, seed=0)
    fv = haar_feature_volume(v, bank)
    assert fv.shape == v.dims + (12,)
    rng = np.random.default_rng(5)
    coords = np.array([[0, 0, 0], [47, 47, 47], [20, 3, 44],
                       [5, 5, 5], [0, 30, 7]])
    direct = haar_features_at(v, coords, bank)
    for c, row in zip(coords, direct):
        assert np.allclose(fv[c[0], c[1], c[2]], row, atol=1e-4)


def test_integral_vs_naive_tolerance():
    rng = np.random.default_rng(6)
    v = Volume3D.from_array(rng.random((12, 12, 12), dtype=np.float32))
    bank = default_bank(window=7, size=32, seed=1)
    fv = haar_feature_volume(v, bank, dtype=np.float64)
    from econet.scribbles import extract_patches_at
    coords = np.argwhere(np.ones((12, 12, 12), dtype=bool))[::31]
    patches = extract_patches_at(v, coords, 7).astype(np.float64)
    ref = haar_features(patches, bank)
    got = fv[coords[:, 0], coords[:, 1], coords[:, 2]]
    assert np.abs(got - ref).max() < 1e-9


def test_linearity_in_intensity():
    rng = np.random.default_rng(7)
    bank = default_bank(window=5, size=24, seed=2)
    patch = rng.random((5, 5, 5))
    a, b = 2.5, -0.75
    feats = haar_features(patch, bank)
    feats2 = haar_features(a * patch + b, bank)
    for d, f1, f2 in zip(bank.descriptors, feats, feats2):
        if d.box_b is None:
            assert abs(f2 - (a * f1 + b)) < 1e-10
        else:
            assert abs(f2 - a * f1) < 1e-10
