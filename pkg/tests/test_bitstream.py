import math

import numpy as np
import pytest
import torch

from backend.bitstream import (
    PAYLOAD_KEYS,
    CodedBitstream,
    FrameRecord,
    RangeDecoder,
    RangeEncoder,
    StreamHeader,
    gaussian_scale_table,
    gaussian_tables,
    quantize_cdf,
    range_decode,
    range_encode,
    read_container,
    scale_indexes,
    table_from_pmf,
    write_container,
)
from backend.bitstream.container import MAGIC
from backend.constants import ContextKind, FrameType, MaskMode
from backend.utils.exception import DecodeError, FormatError


def _stream(frames: int = 3) -> CodedBitstream:
    header = StreamHeader(width=64, height=32, intra_period=32, context_kind=ContextKind.CHARM,
                          model_id="0123456789abcdef", mask_mode=MaskMode.ONE)
    records = [FrameRecord(FrameType.INTRA, payloads={"motion_hyper": b"", "motion_main": b"",
                                                      "inter_hyper": b"\x01\x02", "inter_main": b"\x03" * 7})]
    for i in range(1, frames):
        records.append(FrameRecord(FrameType.INTER, forced_intra=False, payloads=dict(zip(
            PAYLOAD_KEYS, (bytes([i]), bytes([i, i]), b"", bytes(range(i + 3)))
        ))))
    return CodedBitstream(header=header, frames=records)


# ──────────────────────────────────────────────
# Tables
# ──────────────────────────────────────────────
def test_quantized_cdf_is_strictly_increasing_to_full_precision():
    cdf = quantize_cdf([0.5, 0.5 - 1e-9, 1e-12, 0.0])
    assert cdf[0] == 0 and cdf[-1] == 1 << 16
    assert np.all(np.diff(cdf) >= 1)


def test_scale_indexes_pick_the_nearest_bucket_in_log_space():
    table = gaussian_scale_table()
    step = float(np.log(table[1] / table[0]))
    scales = torch.tensor([0.01, float(table[0]), float(table[10]) * math.exp(0.4 * step),
                           float(table[10]) * math.exp(0.6 * step), 1e6])
    assert scale_indexes(scales).tolist() == [0, 0, 10, 11, len(table) - 1]


def test_gaussian_tables_cover_every_bucket():
    tables = gaussian_tables()
    assert len(tables) == len(gaussian_scale_table())
    assert tables[0].offset > tables[-1].offset


# ──────────────────────────────────────────────
# Range coder
# ──────────────────────────────────────────────
def test_random_symbol_roundtrip():
    rng = np.random.default_rng(0)
    tables = gaussian_tables()
    indexes = rng.integers(0, len(tables), 10_000)
    symbols = np.array([int(rng.normal(0, 2 + i / 4)) for i in indexes])
    payload = range_encode(symbols, tables, indexes)
    assert np.array_equal(range_decode(payload, tables, len(symbols), indexes), symbols)


def test_escape_values_roundtrip():
    table = table_from_pmf([0.25, 0.5, 0.25, 1e-6], offset=-1)
    symbols = [0, 1, -1, 5, -7, 123456, -99999, 0]
    payload = range_encode(symbols, table)
    assert range_decode(payload, table, len(symbols)).tolist() == symbols


def test_streaming_coder_interleaves_bits_and_symbols():
    table = table_from_pmf([0.1, 0.8, 0.1, 1e-6], offset=-1)
    encoder = RangeEncoder()
    encoder.encode_symbol(1, table)
    encoder.encode_bit(1)
    encoder.encode_uint(1000)
    encoder.encode_symbol(-1, table)
    assert encoder.escape_bits == 19
    decoder = RangeDecoder(encoder.finish())
    assert decoder.decode_symbol(table) == 1
    assert decoder.decode_bit() == 1
    assert decoder.decode_uint() == 1000
    assert decoder.decode_symbol(table) == -1
    decoder.finish()


def test_empty_stream_is_empty():
    assert RangeEncoder().finish() == b""
    RangeDecoder(b"").finish()


def test_payload_tracks_the_information_content():
    table = table_from_pmf([0.25, 0.5, 0.25, 1e-6], offset=-1)
    rng = np.random.default_rng(3)
    symbols = rng.choice([-1, 0, 1], size=1000, p=[0.25, 0.5, 0.25]).tolist()
    freq = np.diff(table.cdf)
    information = sum(-math.log2(freq[s + 1] / (1 << 16)) for s in symbols)

    payload = range_encode(symbols, table)
    assert information - 1e-6 <= 8 * len(payload) < information + 16
    assert range_decode(payload, table, len(symbols)).tolist() == symbols


def test_single_symbol_payload_is_one_byte():
    table = table_from_pmf([0.25, 0.5, 0.25, 1e-6], offset=-1)
    payload = range_encode([0], table)
    assert len(payload) == 1
    assert range_decode(payload, table, 1).tolist() == [0]


def test_decoder_rejects_truncation_and_trailing_bytes():
    table = gaussian_tables()[20]
    symbols = list(range(-3, 4)) * 50
    payload = range_encode(symbols, table)
    with pytest.raises(DecodeError):
        range_decode(payload[:-2], table, len(symbols))
    with pytest.raises(DecodeError):
        range_decode(payload + b"\x00", table, len(symbols))


def test_skewed_source_compresses():
    table = table_from_pmf([0.01, 0.98, 0.01, 1e-6], offset=-1)
    payload = range_encode([0] * 8000, table)
    # -log2(0.98) ~ 0.029 bits per symbol
    assert len(payload) * 8 < 8000 * 0.05


# ──────────────────────────────────────────────
# Container
# ──────────────────────────────────────────────
def test_container_roundtrip(tmp_path):
    bs = _stream()
    path = tmp_path / "a.mcrt"
    n = write_container(bs, path)
    assert n == path.stat().st_size
    back = read_container(path)
    assert back.header == bs.header
    assert [f.payloads for f in back.frames] == [f.payloads for f in bs.frames]
    assert [f.frame_type for f in back.frames] == [FrameType.INTRA, FrameType.INTER, FrameType.INTER]


def test_header_layout():
    data = _stream().to_bytes()
    assert data[:4] == MAGIC
    assert data[4] == 1
    assert int.from_bytes(data[5:7], "big") == 64
    assert int.from_bytes(data[7:9], "big") == 32
    assert int.from_bytes(data[9:11], "big") == 32
    assert data[13:21] == bytes.fromhex("0123456789abcdef")


def test_payload_bits_and_bpp():
    bs = _stream()
    assert bs.payload_bits() == 8 * sum(f.total_bytes for f in bs.frames)
    assert bs.bpp() == pytest.approx(bs.payload_bits() / (64 * 32 * 3))


def test_whole_frame_prefix_is_valid():
    data = _stream().to_bytes()
    first_two = CodedBitstream(header=_stream().header, frames=_stream().frames[:2]).to_bytes()
    assert data.startswith(first_two)
    assert len(CodedBitstream.from_bytes(first_two).frames) == 2


@pytest.mark.parametrize("mutate, message", [
    (lambda d: b"XXXX" + d[4:], "bad magic"),
    (lambda d: d[:4] + b"\x09" + d[5:], "version"),
    (lambda d: d[:11] + b"\x09" + d[12:], "context_kind"),
    (lambda d: d[:12] + b"\x09" + d[13:], "mask_mode"),
    (lambda d: d[:-1], "truncated"),
    (lambda d: d[:10], "too short"),
])
def test_malformed_containers(mutate, message):
    with pytest.raises(FormatError, match=message):
        CodedBitstream.from_bytes(mutate(_stream().to_bytes()))


def test_model_id_must_be_64_bits():
    bs = _stream()
    bs.header.model_id = "abc"
    with pytest.raises(FormatError):
        bs.to_bytes()
