import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import torch

from backend.bitstream import PAYLOAD_KEYS, CodedBitstream, FrameRecord, StreamHeader
from backend.constants import Frame, FrameType, MaskMode
from backend.constants.presets import CodecConfig
from backend.codec.video import VideoCodec
from backend.masking import generate_mask, mix_input, reconstruct
from backend.motion import MotionState
from backend.utils.checkpoint import model_id as compute_model_id
from backend.utils.exception import CodecError, ConfigurationError, CustomException
from backend.utils.logger import setup_logger

logger = setup_logger("codec_session")


@dataclass
class FrameStats:
    index: int
    frame_type: FrameType
    forced_intra: bool
    byte_lengths: Dict[str, int] = field(default_factory=dict)
    mask_mean: Optional[float] = None
    estimated_bits: float = 0.0

    @property
    def bits(self) -> int:
        return 8 * sum(self.byte_lengths.values())


@dataclass
class InterTrace:
    """Intermediate tensors of the last coded or decoded P-frame."""
    x_c: torch.Tensor
    mask: torch.Tensor
    decoded: torch.Tensor
    f_hat: torch.Tensor


class CodecSession:
    """
    One coding stream: the networks, the decoded picture buffer and the GOP
    configuration. Encoder and decoder each own a session; the encoder
    reconstructs from decoded quantities only, so both buffers stay equal.
    """

    def __init__(self, model: VideoCodec, config: CodecConfig, height: int, width: int,
                 model_id: Optional[str] = None):
        self.model = model.eval()
        self.config = config
        self.height = height
        self.width = width
        self.model_id = model_id or compute_model_id(model)
        self.state = MotionState(height, width)
        self.last_inter: Optional[InterTrace] = None
        # model rate of the last coded frame, all payloads
        self.last_estimated_bits = 0.0

    @property
    def mask_mode(self) -> MaskMode:
        return MaskMode(self.config.mask_mode)

    def header(self) -> StreamHeader:
        return StreamHeader(
            width=self.width, height=self.height, intra_period=self.config.intra_period,
            context_kind=self.model.cfg.inter.context.kind, model_id=self.model_id,
            mask_mode=self.mask_mode,
        )

    def _to_frame(self, x_hat: torch.Tensor) -> Frame:
        return Frame(pixels=x_hat[0].detach())

    # ──────────────────────────────────────────────
    # Intra
    # ──────────────────────────────────────────────
    @torch.no_grad()
    def code_intra(self, x_t: Frame, forced: bool = False) -> Tuple[FrameRecord, Frame]:
        hyper, main, x_hat, bits = self.model.intra.compress(x_t.batch())
        self.last_estimated_bits = bits
        self.last_inter = None
        self.state.reset()
        self.state.push(x_hat)
        record = FrameRecord(FrameType.INTRA, forced_intra=forced)
        record.payloads.update(inter_hyper=hyper, inter_main=main)
        return record, self._to_frame(x_hat)

    @torch.no_grad()
    def decode_intra(self, record: FrameRecord) -> Frame:
        x_hat = self.model.intra.decompress(
            record.payloads["inter_hyper"], record.payloads["inter_main"], self.height, self.width
        )
        self.last_inter = None
        self.state.reset()
        self.state.push(x_hat)
        return self._to_frame(x_hat)

    # ──────────────────────────────────────────────
    # Inter
    # ──────────────────────────────────────────────
    @torch.no_grad()
    def encode_p_frame(self, x_t: Frame) -> Tuple[FrameRecord, Frame]:
        if not self.state.decoded_frames:
            raise CodecError("encode_p_frame needs a decoded reference; code an intra frame first")
        m = self.model
        x = x_t.batch()
        x_ref = self.state.latest
        f_c = m.extrapolator.extrapolate(self.state)

        f_t = m.flow_estimator(x, x_ref)
        motion_hyper, motion_main, f_hat, motion_bits = m.motion_codec.compress(f_t, f_c)

        _, x_c = m.predict(x_ref, f_hat)
        mask = generate_mask(m.mask_generator, x_c, f_hat, self.mask_mode)
        inter_hyper, inter_main, decoded, inter_bits = m.inter_codec.compress(mix_input(x, x_c, mask), x_c)
        x_hat = reconstruct(decoded, x_c, mask)

        self.state.push(x_hat, f_hat)
        self.last_inter = InterTrace(x_c, mask, decoded, f_hat)
        self.last_estimated_bits = motion_bits + inter_bits
        record = FrameRecord(FrameType.INTER, payloads=dict(zip(
            PAYLOAD_KEYS, (motion_hyper, motion_main, inter_hyper, inter_main)
        )))
        return record, self._to_frame(x_hat)

    @torch.no_grad()
    def decode_p_frame(self, record: FrameRecord) -> Frame:
        if not self.state.decoded_frames:
            raise CodecError("decode_p_frame needs a decoded reference; stream must start with an intra frame")
        m = self.model
        x_ref = self.state.latest
        f_c = m.extrapolator.extrapolate(self.state)

        p = record.payloads
        f_hat = m.motion_codec.decompress(p["motion_hyper"], p["motion_main"], f_c)
        _, x_c = m.predict(x_ref, f_hat)
        mask = generate_mask(m.mask_generator, x_c, f_hat, self.mask_mode)
        decoded = m.inter_codec.decompress(p["inter_hyper"], p["inter_main"], x_c)
        x_hat = reconstruct(decoded, x_c, mask)

        self.state.push(x_hat, f_hat)
        self.last_inter = InterTrace(x_c, mask, decoded, f_hat)
        return self._to_frame(x_hat)

    def is_intra(self, index: int, forced: Iterable[int] = ()) -> bool:
        return index % self.config.intra_period == 0 or index in set(forced)


FrameHook = Callable[[int, CodecSession], None]


def encode_sequence(session: CodecSession, frames: List[Frame], forced_intra: Iterable[int] = (),
                    on_frame: Optional[FrameHook] = None) -> Tuple[CodedBitstream, List[FrameStats], List[Frame]]:
    """
    Code up to ``frames_to_code`` frames. Frame i is intra when i is a multiple
    of the intra period or listed in ``forced_intra``. ``on_frame(i, session)``
    runs after each frame, while ``session.last_inter`` still holds it.

    Returns the bitstream, per-frame stats and the encoder-side reconstructions.
    """
    forced = set(forced_intra)
    bs = CodedBitstream(header=session.header())
    stats: List[FrameStats] = []
    recons: List[Frame] = []
    try:
        for i, frame in enumerate(frames[:session.config.frames_to_code]):
            if session.is_intra(i, forced):
                is_forced = i in forced and i % session.config.intra_period != 0
                record, x_hat = session.code_intra(frame, forced=is_forced)
                mask_mean = None
            else:
                record, x_hat = session.encode_p_frame(frame)
                mask_mean = float(session.last_inter.mask.mean())
            bs.frames.append(record)
            recons.append(x_hat)
            stat = FrameStats(i, record.frame_type, record.forced_intra, record.byte_lengths, mask_mean,
                              session.last_estimated_bits)
            stats.append(stat)
            tag = "code_intra" if record.frame_type is FrameType.INTRA else "encode_p_frame"
            logger.info(f"[{tag}] frame {i} | bits={stat.bits} | estimated={stat.estimated_bits:.0f} "
                        f"| lengths={stat.byte_lengths}")
            if on_frame is not None:
                on_frame(i, session)
    except CodecError:
        raise
    except Exception as e:
        raise CustomException(e, sys)
    return bs, stats, recons


def decode_sequence(session: CodecSession, bs: CodedBitstream) -> List[Frame]:
    """Decode every frame of ``bs``; the session must hold the encoder's model."""
    if bs.header.model_id != session.model_id:
        raise ConfigurationError(
            f"bitstream model_id {bs.header.model_id} does not match loaded model {session.model_id}"
        )
    if (bs.header.width, bs.header.height) != (session.width, session.height):
        raise ConfigurationError(
            f"bitstream is {bs.header.width}x{bs.header.height}, session is {session.width}x{session.height}"
        )
    if bs.header.context_kind != session.model.cfg.inter.context.kind:
        raise ConfigurationError(
            f"bitstream context {bs.header.context_kind.value} does not match "
            f"model context {session.model.cfg.inter.context.kind.value}"
        )
    session.config = session.config.model_copy(update={
        "intra_period": bs.header.intra_period, "mask_mode": bs.header.mask_mode,
    })
    session.state.reset()

    out: List[Frame] = []
    try:
        for i, record in enumerate(bs.frames):
            if record.frame_type is FrameType.INTRA:
                out.append(session.decode_intra(record))
            else:
                out.append(session.decode_p_frame(record))
            logger.debug(f"[decode_sequence] frame {i} | type={record.frame_type.value}")
    except CodecError:
        raise
    except Exception as e:
        raise CustomException(e, sys)
    return out


def session_for_stream(model: VideoCodec, header: StreamHeader, frames_to_code: int = 96) -> CodecSession:
    """Decoder-side session configured entirely from the container header."""
    config = CodecConfig(
        intra_period=header.intra_period, frames_to_code=frames_to_code, mask_mode=header.mask_mode,
    )
    return CodecSession(model, config, header.height, header.width)
