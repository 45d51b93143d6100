from typing import List

import torch

from backend.constants import Frame, QuantMode
from backend.utils.exception import ContractViolation
from backend.utils.logger import setup_logger

logger = setup_logger("bit_profile")


@torch.no_grad()
def channel_bit_profile(session, clip: List[Frame], top: int = 8) -> List[float]:
    """
    Share of inter-frame main-latent bits carried by each channel, averaged
    over the P-frames of ``clip`` and sorted in descending order.

    Runs the closed loop with rounded latents: P-frames predict from the
    decoded history exactly as the coder does.
    """
    model = session.model
    session.state.reset()
    totals = None
    p_frames = 0
    for i, frame in enumerate(clip[:session.config.frames_to_code]):
        x = frame.batch()
        if session.is_intra(i):
            x_hat, _ = model.intra(x, QuantMode.ROUND)
            session.state.reset()
            session.state.push(x_hat)
            continue
        f_c = model.extrapolator.extrapolate(session.state)
        out = model.p_frame(x, session.state.latest, f_c, session.mask_mode, QuantMode.ROUND)
        session.state.push(out.x_hat, out.f_hat)
        per_channel = out.inter_coding.y_bits.double().sum(dim=(0, 2, 3))
        totals = per_channel if totals is None else totals + per_channel
        p_frames += 1

    if totals is None:
        raise ContractViolation(f"channel_bit_profile needs at least one P-frame, clip has {len(clip)} frames")
    total = float(totals.sum())
    if total <= 0:
        shares = [1.0 / totals.numel()] * totals.numel()
    else:
        shares = sorted((totals / total).tolist(), reverse=True)
    logger.info(
        f"[channel_bit_profile] {p_frames} P-frames | top-{top} share={sum(shares[:top]):.4f}"
    )
    return shares


def top_share(shares: List[float], k: int = 8) -> float:
    return float(sum(sorted(shares, reverse=True)[:k]))
