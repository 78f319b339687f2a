import numpy as np
import pytest

from oedipus import SupportSet, pattern_from_groups
from oedipus.io import (
    mask_to_rle,
    pattern_from_json,
    pattern_to_json,
    read_image_oedm,
    read_oedm,
    rle_to_mask,
    support_from_json,
    support_to_json,
    write_image_oedm,
    write_oedm,
    write_pgm,
)

from conftest import make_model


def test_oedm_roundtrip(tmp_path, rng):
    data = rng.standard_normal((2, 3, 4, 5)) + 1j * rng.standard_normal((2, 3, 4, 5))
    path = tmp_path / "maps.oedm"
    write_oedm(path, data)
    back = read_oedm(path)
    assert np.array_equal(back, data)
    raw = path.read_bytes()
    assert raw[:4] == b"OEDM"
    # header: magic + 4 uint32, then float64 planes
    assert len(raw) == 20 + 2 * 3 * 4 * 5 * 16


def test_oedm_single_image_helpers(tmp_path, rng):
    img = rng.standard_normal((8, 6)) + 1j * rng.standard_normal((8, 6))
    path = tmp_path / "img.oedm"
    write_image_oedm(path, img)
    assert np.array_equal(read_image_oedm(path), img)


def test_oedm_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.oedm"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        read_oedm(path)


def test_pgm_format(tmp_path):
    img = np.zeros((2, 3))
    img[0, 0] = 1.0
    img[1, 2] = 0.5
    path = tmp_path / "img.pgm"
    write_pgm(path, img)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    pix = np.frombuffer(raw[len(b"P5\n3 2\n255\n") :], dtype=np.uint8).reshape(2, 3)
    assert pix[0, 0] == 255
    assert pix[1, 2] == 128


def test_rle_roundtrip(rng):
    for _ in range(20):
        mask = rng.random((6, 7)) > 0.6
        runs = mask_to_rle(mask)
        assert sum(runs) == mask.size
        assert np.array_equal(rle_to_mask(runs, mask.shape), mask)
    all_on = np.ones((3, 3), dtype=bool)
    assert mask_to_rle(all_on) == [0, 9]
    with pytest.raises(ValueError):
        rle_to_mask([0, 5], (3, 3))


def test_pattern_json_roundtrip():
    model = make_model((4, 6), undersample_axes=(1,))
    pattern = pattern_from_groups(
        model.candidates, [0, 2, 5], mode="uniform/R2", log=[1.5, 2.5]
    )
    text = pattern_to_json(pattern)
    back = pattern_from_json(text, model.candidates)
    assert back.kept_groups == pattern.kept_groups
    assert back.mode == pattern.mode
    assert back.log == pattern.log
    assert np.array_equal(back.mask, pattern.mask)
    # byte-stable serialization
    assert pattern_to_json(back) == text
    other = make_model((8, 8)).candidates
    with pytest.raises(ValueError):
        pattern_from_json(text, other)


def test_support_json_roundtrip():
    sup = SupportSet(indices=np.array([3, 1, 7]), q=16, source_label="seed0")
    text = support_to_json(sup)
    back = support_from_json(text, q=16)
    assert np.array_equal(back.indices, sup.indices)
    assert back.source_label == "seed0"
    assert '"S":3' in text
