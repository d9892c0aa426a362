import numpy as np
import pytest

from liverfat.rvf import read_rvf, volume_to_mask, write_rvf

from conftest import make_mask, make_volume


def test_roundtrip_multichannel(tmp_path):
    rng = np.random.default_rng(0)
    a = make_volume(
        rng.random((5, 4, 3)).astype(np.float32),
        spacing=(2.23, 2.23, 3.0),
        origin=(1.0, -2.0, 0.5),
    )
    b = a.with_data(rng.random((5, 4, 3)).astype(np.float32))
    path = tmp_path / "pair.rvf"
    write_rvf(path, [a, b])
    out = read_rvf(path)
    assert len(out) == 2
    np.testing.assert_array_equal(out[0].data, a.data)
    np.testing.assert_array_equal(out[1].data, b.data)
    assert out[0].dims == a.dims
    np.testing.assert_allclose(out[0].spacing, a.spacing, rtol=1e-6)


def test_write_is_deterministic(tmp_path):
    vol = make_volume(np.arange(24, dtype=np.float32).reshape(2, 3, 4))
    write_rvf(tmp_path / "a.rvf", [vol])
    write_rvf(tmp_path / "b.rvf", [vol])
    assert (tmp_path / "a.rvf").read_bytes() == (tmp_path / "b.rvf").read_bytes()


def test_x_fastest_layout(tmp_path):
    # flat file order must walk x first, then y, then z
    data = np.zeros((2, 2, 2), dtype=np.float64)
    data[1, 0, 0] = 1.0  # second value in x-fastest order
    write_rvf(tmp_path / "v.rvf", [make_volume(data)])
    raw = (tmp_path / "v.rvf").read_bytes()
    values = np.frombuffer(raw[48:], dtype="<f4")
    assert values[1] == 1.0 and values[0] == 0.0


def test_mask_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    m = make_mask(rng.random((4, 4, 4)) < 0.5)
    write_rvf(tmp_path / "m.rvf", [m])
    out = volume_to_mask(read_rvf(tmp_path / "m.rvf")[0])
    np.testing.assert_array_equal(out.data, m.data)


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.rvf"
    p.write_bytes(b"NOPE" + bytes(44))
    with pytest.raises(ValueError, match="magic"):
        read_rvf(p)


def test_truncated_rejected(tmp_path):
    vol = make_volume(np.ones((3, 3, 3)))
    p = tmp_path / "t.rvf"
    write_rvf(p, [vol])
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(ValueError, match="bytes"):
        read_rvf(p)


def test_channels_must_share_grid(tmp_path):
    a = make_volume(np.ones((3, 3, 3)))
    b = make_volume(np.ones((3, 3, 4)))
    with pytest.raises(ValueError, match="share"):
        write_rvf(tmp_path / "x.rvf", [a, b])
