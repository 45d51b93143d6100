import os
from dotenv import load_dotenv

load_dotenv()

import torch

from backend.codec import CodecSession, VideoCodec, decode_sequence, encode_sequence
from backend.constants import MaskMode, RdPoint
from backend.constants.presets import CodecConfig, toy_preset
from backend.evaluation import bd_rate, buffer_preset_planes, complexity_report, psnr_rgb
from backend.training import SyntheticClipConfig, synthetic_clip

torch.manual_seed(int(os.getenv("MASKCRT_SEED", "0")))

# ── Untrained toy model: exercises the dataflow, not the quality ──
model = VideoCodec(toy_preset()).eval()
clip = synthetic_clip(8, SyntheticClipConfig(height=64, width=64), seed=0)

# ════════════════════════════════════════════════
#  STEP 1: Encode / decode round trip per mask mode
# ════════════════════════════════════════════════
for mode in MaskMode:
    print("=" * 60)
    print(f"MASK MODE: {mode.value}")
    print("=" * 60)
    config = CodecConfig(intra_period=4, frames_to_code=len(clip), mask_mode=mode)
    encoder = CodecSession(model, config, 64, 64)
    bs, stats, recons = encode_sequence(encoder, clip)

    decoder = CodecSession(model, config, 64, 64)
    decoded = decode_sequence(decoder, bs)

    drift = max(float((a.pixels - b.pixels).abs().max()) for a, b in zip(recons, decoded))
    print(f"Container bytes: {len(bs.to_bytes())}")
    print(f"Payload bpp: {bs.bpp():.4f}")
    print(f"Frame types: {''.join(s.frame_type.value for s in stats)}")
    print(f"Mean PSNR-RGB: {sum(psnr_rgb(x, y) for x, y in zip(clip, recons)) / len(clip):.2f} dB")
    print(f"Encoder/decoder drift: {drift}")

# ════════════════════════════════════════════════
#  STEP 2: Complexity and buffer accounting
# ════════════════════════════════════════════════
print("\n" + "=" * 60)
print("COMPLEXITY (toy preset, 64x64)")
print("=" * 60)
report = complexity_report(model)
print(f"Parameters: {report.param_count}")
print(f"Encoder kMAC/pixel: {report.enc_kmac_per_pixel:.1f}")
print(f"Decoder kMAC/pixel: {report.dec_kmac_per_pixel:.1f}")
for name, planes in buffer_preset_planes().items():
    print(f"  {name:10s} {planes:6.2f} planes")

# ════════════════════════════════════════════════
#  STEP 3: BD-rate of a curve against itself at double rate
# ════════════════════════════════════════════════
print("\n" + "=" * 60)
print("BD-RATE")
print("=" * 60)
anchor = [RdPoint(0.05, 30.0), RdPoint(0.1, 32.0), RdPoint(0.2, 34.0), RdPoint(0.4, 36.0)]
doubled = [RdPoint(2 * p.bpp, p.quality) for p in anchor]
print(f"Doubled rate: {bd_rate(anchor, doubled):+.2f}%")
