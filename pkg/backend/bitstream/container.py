"""
On-disk container. Layout (all integers big-endian) is documented in
docs/bitstream.md; frames follow the header back to back until end of file,
so any whole-frame prefix is itself a valid container.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from backend.constants import CONTEXT_KIND_CODES, MASK_MODE_CODES, ContextKind, FrameType, MaskMode
from backend.utils.exception import FormatError

MAGIC = b"MCRT"
VERSION = 1
PAYLOAD_KEYS = ("motion_hyper", "motion_main", "inter_hyper", "inter_main")

_HEADER = struct.Struct(">4sBHHHBB8s")
_FRAME = struct.Struct(">BB4I")
_FRAME_CODES = {FrameType.INTRA: 0, FrameType.INTER: 1}


@dataclass
class FrameRecord:
    """
    One coded frame. Intra frames carry their image hyper/main payloads in the
    ``inter_*`` slots and leave the motion slots empty.
    """
    frame_type: FrameType
    forced_intra: bool = False
    payloads: Dict[str, bytes] = field(default_factory=lambda: {k: b"" for k in PAYLOAD_KEYS})

    @property
    def byte_lengths(self) -> Dict[str, int]:
        return {k: len(self.payloads.get(k, b"")) for k in PAYLOAD_KEYS}

    @property
    def total_bytes(self) -> int:
        return sum(self.byte_lengths.values())


@dataclass
class StreamHeader:
    width: int
    height: int
    intra_period: int
    context_kind: ContextKind
    model_id: str
    mask_mode: MaskMode = MaskMode.LEARNED
    version: int = VERSION


@dataclass
class CodedBitstream:
    header: StreamHeader
    frames: List[FrameRecord] = field(default_factory=list)

    def payload_bits(self) -> int:
        return 8 * sum(f.total_bytes for f in self.frames)

    def bpp(self) -> float:
        pixels = self.header.width * self.header.height * max(len(self.frames), 1)
        return self.payload_bits() / pixels

    def to_bytes(self) -> bytes:
        h = self.header
        try:
            model_id = bytes.fromhex(h.model_id)
        except ValueError as e:
            raise FormatError(f"model_id must be 16 hex digits, got {h.model_id!r}") from e
        if len(model_id) != 8:
            raise FormatError(f"model_id must be 16 hex digits, got {h.model_id!r}")

        out = bytearray(_HEADER.pack(
            MAGIC, h.version, h.width, h.height, h.intra_period,
            CONTEXT_KIND_CODES[ContextKind(h.context_kind)],
            MASK_MODE_CODES[MaskMode(h.mask_mode)],
            model_id,
        ))
        for frame in self.frames:
            lengths = frame.byte_lengths
            out += _FRAME.pack(
                _FRAME_CODES[frame.frame_type], int(frame.forced_intra),
                *(lengths[k] for k in PAYLOAD_KEYS),
            )
            for key in PAYLOAD_KEYS:
                out += frame.payloads.get(key, b"")
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodedBitstream":
        if len(data) < _HEADER.size:
            raise FormatError(f"container too short: {len(data)} bytes, header needs {_HEADER.size}")
        magic, version, width, height, intra_period, ctx_code, mask_code, model_id = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported container version {version}, expected {VERSION}")

        kinds = {v: k for k, v in CONTEXT_KIND_CODES.items()}
        modes = {v: k for k, v in MASK_MODE_CODES.items()}
        if ctx_code not in kinds:
            raise FormatError(f"unknown context_kind code {ctx_code}")
        if mask_code not in modes:
            raise FormatError(f"unknown mask_mode code {mask_code}")

        header = StreamHeader(
            width=width, height=height, intra_period=intra_period,
            context_kind=kinds[ctx_code], model_id=model_id.hex(),
            mask_mode=modes[mask_code], version=version,
        )
        frame_types = {v: k for k, v in _FRAME_CODES.items()}
        frames = []
        pos = _HEADER.size
        while pos < len(data):
            if pos + _FRAME.size > len(data):
                raise FormatError(f"truncated frame header at byte {pos}")
            type_code, forced, *lengths = _FRAME.unpack_from(data, pos)
            if type_code not in frame_types:
                raise FormatError(f"unknown frame type code {type_code} at byte {pos}")
            pos += _FRAME.size
            payloads = {}
            for key, n in zip(PAYLOAD_KEYS, lengths):
                if pos + n > len(data):
                    raise FormatError(f"truncated {key} payload: expected {n} bytes at {pos}")
                payloads[key] = data[pos:pos + n]
                pos += n
            frames.append(FrameRecord(frame_types[type_code], bool(forced), payloads))
        return cls(header=header, frames=frames)


def write_container(bs: CodedBitstream, path) -> int:
    data = bs.to_bytes()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)
    return len(data)


def read_container(path) -> CodedBitstream:
    return CodedBitstream.from_bytes(Path(path).read_bytes())
