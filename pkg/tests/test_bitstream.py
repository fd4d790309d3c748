import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sramtrng import bitstream
from sramtrng.bitstream import BitstreamFormatError, decode, encode


@given(st.lists(st.integers(0, 1), max_size=300), st.booleans())
def test_roundtrip(bits, conditioned):
    out = decode(encode(bits, conditioned))
    assert list(out.bits) == bits and out.conditioned == conditioned


def test_layout_lsb_first():
    data = encode([1, 0, 0, 0, 0, 0, 0, 0, 1, 1], conditioned=True)
    assert data[:4] == b"TRNB" and data[4] == 1 and data[5] == 1
    assert int.from_bytes(data[6:14], "little") == 10
    assert data[14:] == bytes([0x01, 0x03])


@pytest.mark.parametrize("data,offset", [
    (b"TRN", 3),
    (b"XXXX\x01\x00" + (0).to_bytes(8, "little"), 0),
    (b"TRNB\x02\x00" + (0).to_bytes(8, "little"), 4),
    (b"TRNB\x01\x04" + (0).to_bytes(8, "little"), 5),
    (b"TRNB\x01\x00" + (9).to_bytes(8, "little") + b"\x00", 15),
    (b"TRNB\x01\x00" + (3).to_bytes(8, "little") + b"\xff", 14),
])
def test_malformed_inputs_report_offsets(data, offset):
    with pytest.raises(BitstreamFormatError) as err:
        decode(data, path="x.trnb")
    assert err.value.offset == offset
    assert "x.trnb" in str(err.value) and f"byte {offset}" in str(err.value)


def test_encode_rejects_non_bits():
    with pytest.raises(ValueError):
        encode([0, 2])
    with pytest.raises(ValueError):
        encode(np.zeros((2, 2)))


def test_file_roundtrip(tmp_path):
    p = tmp_path / "b.trnb"
    bits = np.random.default_rng(0).integers(0, 2, 1000).astype(np.uint8)
    bitstream.write(p, bits, True)
    out = bitstream.read(p)
    assert np.array_equal(out.bits, bits) and out.conditioned
