from .conditional_codec import CodecOutput, ConditionalCodec
from .intra import IntraCodec
from .session import (
    CodecSession,
    FrameStats,
    InterTrace,
    decode_sequence,
    encode_sequence,
    session_for_stream,
)
from .video import PFrameOutput, VideoCodec

__all__ = [
    "CodecOutput",
    "CodecSession",
    "ConditionalCodec",
    "FrameStats",
    "IntraCodec",
    "InterTrace",
    "PFrameOutput",
    "VideoCodec",
    "decode_sequence",
    "encode_sequence",
    "session_for_stream",
]
