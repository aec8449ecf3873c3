import numpy as np
import pytest

import svlab.tensor as T
from svlab.checkpoint import load_params, save_params
from svlab.errors import ParseError
from svlab.rng import Rng


def test_roundtrip_bit_exact(tmp_path):
    rng = Rng(17)
    named = {
        "w1": T.Tensor(rng.uniform(-1, 1, size=(7, 3))),
        "deep.name.b": T.Tensor(rng.normal(size=11)),
        "scalarish": T.Tensor(rng.normal(size=(1,))),
        "conv": T.param(rng.normal(size=(2, 3, 3, 3))),
    }
    path = tmp_path / "ck.bin"
    save_params(path, named)
    back = load_params(path)
    assert list(back) == list(named)
    for k in named:
        orig = named[k].value.data if isinstance(named[k], T.Node) else named[k].data
        assert back[k].shape == orig.shape
        assert np.array_equal(back[k].data, orig)


def test_save_load_save_identical_bytes(tmp_path):
    named = {"a": T.Tensor(Rng(3).normal(size=(4, 4)))}
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    save_params(p1, named)
    save_params(p2, load_params(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_and_version_checked(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(ParseError):
        load_params(path)
    good = tmp_path / "good.bin"
    save_params(good, {"x": T.Tensor([1.0])})
    blob = bytearray(good.read_bytes())
    blob[4] = 99  # version
    bad2 = tmp_path / "bad2.bin"
    bad2.write_bytes(bytes(blob))
    with pytest.raises(ParseError):
        load_params(bad2)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "ck.bin"
    save_params(path, {"x": T.Tensor([1.0, 2.0])})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(ParseError):
        load_params(path)
