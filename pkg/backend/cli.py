"""
Command-line entry point: ``maskcrt <command> [options]``.

    train    staged training of one lambda model
    encode   YUV420 clip -> container (+ stats JSON, encoder-side recon)
    decode   container -> YUV420 clip
    eval     RD points of one or more lambda models on YUV420 clips, plus the
             per-channel bit profile of the first model
    ablate   BD-rate matrix of an ablation study against an anchor
    plot     RD curves from an eval/ablate JSON file
    sandbox  empirical-entropy study of the mask choice

Every command writes ``manifest.json`` echoing its resolved configuration
into its run directory (``--run-dir`` or ``$MASKCRT_RUNS_DIR/<command>-<time>``).
"""
import argparse
import json
import os
import sys
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from dotenv import load_dotenv

from backend.bitstream import read_container, write_container
from backend.codec import CodecSession, decode_sequence, encode_sequence, session_for_stream
from backend.constants import Command, ContextKind, CstbVariant, Frame, MaskMode, Metric, RdPoint
from backend.constants.presets import PRESETS, RunConfig, TrainConfig, build_lambda_ladder
from backend.evaluation import (
    DEFAULT_ANCHORS,
    MIN_POINTS,
    STUDIES,
    FrameMeasurement,
    SandboxConfig,
    ablation_matrix,
    channel_bit_profile,
    complexity_report,
    empirical_entropy_sandbox,
    load_curves,
    msssim_rgb,
    plot_rd_curves,
    pool_rd_points,
    psnr_rgb,
    sandbox_table,
    top_share,
    write_csv,
    write_json,
)
from backend.media import (
    crop_to_alignment,
    load_yuv420,
    rgb_to_yuv420_bt601,
    save_mask_panel,
    save_mask_png,
    write_flo,
    write_yuv420,
    yuv_to_rgb_bt601,
)
from backend.media.yuv import check_alignment
from backend.utils.checkpoint import load_checkpoint, model_id
from backend.utils.exception import CodecError, ConfigurationError, CustomException
from backend.utils.logger import setup_logger

load_dotenv()
logger = setup_logger("cli")


# ──────────────────────────────────────────────
# Helpers
# ──────────────────────────────────────────────
def parse_source(spec: str) -> Tuple[str, int, int, str]:
    """``path:WxH[:name]`` -> (path, width, height, name)."""
    parts = spec.split(":")
    if len(parts) not in (2, 3) or "x" not in parts[1]:
        raise ConfigurationError(f"input {spec!r} must look like path.yuv:WIDTHxHEIGHT[:name]")
    width, height = (int(v) for v in parts[1].lower().split("x"))
    name = parts[2] if len(parts) == 3 else os.path.splitext(os.path.basename(parts[0]))[0]
    return parts[0], width, height, name


def load_frames(spec: str, alignment: int, crop: bool, limit: Optional[int] = None) -> Tuple[str, List[Frame]]:
    path, width, height, name = parse_source(spec)
    frames = yuv_to_rgb_bt601(load_yuv420(path, width, height))[:limit]
    if crop:
        frames = [crop_to_alignment(f, alignment) for f in frames]
    else:
        check_alignment(frames[0], alignment)
    return name, frames


def run_dir_for(cfg: RunConfig) -> str:
    if cfg.run_dir:
        return cfg.run_dir
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return os.path.join(os.getenv("MASKCRT_RUNS_DIR", "runs"), f"{cfg.command.value}-{stamp}")


def write_manifest(cfg: RunConfig, run_dir: str, **fields) -> str:
    """Echo ``cfg`` into ``run_dir/manifest.json``, keeping keys a command already wrote there."""
    path = os.path.join(run_dir, "manifest.json")
    manifest: Dict = {}
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest.update({
        "command": cfg.command.value,
        "created": datetime.now(timezone.utc).isoformat(),
        "config": cfg.model_dump(mode="json"),
        **fields,
    })
    return write_json(manifest, path)


def trace_writer(dump_dir: str, frames: List[Frame]):
    """Per P-frame: the mask as PNG, an x_t | m*x_c | residue | m panel and the decoded flow as .flo."""
    os.makedirs(dump_dir, exist_ok=True)

    def write(index: int, session: CodecSession) -> None:
        trace = session.last_inter
        if trace is None:
            return
        stem = os.path.join(dump_dir, f"frame{index:03d}")
        save_mask_png(trace.mask, f"{stem}_mask.png")
        save_mask_panel(frames[index].pixels, trace.x_c, trace.mask, trace.decoded, f"{stem}_panel.png")
        write_flo(trace.f_hat, f"{stem}.flo")

    return write


def measure(session: CodecSession, frames: List[Frame], forced_intra: Sequence[int] = (),
            dump_dir: Optional[str] = None) -> Tuple[List[FrameMeasurement], Dict]:
    hook = trace_writer(dump_dir, frames) if dump_dir else None
    bs, stats, recons = encode_sequence(session, frames, forced_intra, on_frame=hook)
    pixels = session.width * session.height
    measurements = [
        FrameMeasurement(bits=s.bits, pixels=pixels, psnr=psnr_rgb(src, rec), msssim=msssim_rgb(src, rec))
        for s, src, rec in zip(stats, frames, recons)
    ]
    return measurements, {"bitstream": bs, "stats": stats, "recons": recons}


# ──────────────────────────────────────────────
# Commands
# ──────────────────────────────────────────────
def cmd_train(cfg: RunConfig, run_dir: str) -> Dict:
    from backend.codec import VideoCodec
    from backend.training import Trainer, YuvClipDataset, synthetic_data_factory

    torch.manual_seed(cfg.seed)
    model_cfg = cfg.resolve_model()
    train_cfg = TrainConfig(
        metric=cfg.metric, lambda_index=cfg.lambda_index, seed=cfg.seed, mask_mode=cfg.mask_mode,
        **{k: v for k, v in cfg.extra.items() if k in TrainConfig.model_fields},
    )
    model = VideoCodec(model_cfg)
    if cfg.inputs:
        sources = [parse_source(s)[:3] for s in cfg.inputs]
        data_factory = lambda n: YuvClipDataset(sources, n, crop=train_cfg.crop, seed=cfg.seed)  # noqa: E731
    else:
        data_factory = synthetic_data_factory(train_cfg)
    trainer = Trainer(model, train_cfg, run_dir, data_factory=data_factory,
                      phases=cfg.extra.get("phases"), preset=model_cfg.preset)
    result = trainer.run()
    return {"manifest": result.get("manifest_path"), "checkpoint": os.path.join(run_dir, "model.pt"),
            "model_id": model_id(model)}


def cmd_encode(cfg: RunConfig, run_dir: str) -> Dict:
    model, model_cfg, _ = load_checkpoint(cfg.model)
    name, frames = load_frames(cfg.inputs[0], model_cfg.alignment, cfg.crop, cfg.frames)
    session = CodecSession(model, cfg.codec_config(), frames[0].height, frames[0].width)
    forced = cfg.extra.get("forced_intra", [])
    dump = cfg.extra.get("dump_masks")
    measurements, coded = measure(session, frames, forced, os.path.join(dump, name) if dump else None)
    bs = coded["bitstream"]

    output = cfg.output or os.path.join(run_dir, f"{name}.mcrt")
    nbytes = write_container(bs, output)
    pixels = len(bs.frames) * session.width * session.height
    stats = {
        "sequence": name,
        "frames": len(bs.frames),
        "bpp": nbytes * 8 / pixels,
        "payload_bpp": bs.bpp(),
        "psnr_rgb": sum(m.psnr for m in measurements) / len(measurements),
        "msssim_rgb": sum(m.msssim for m in measurements) / len(measurements),
        "per_frame": [
            {"index": s.index, "type": s.frame_type.value, "forced_intra": s.forced_intra, "bits": s.bits,
             "estimated_bits": round(s.estimated_bits, 1),
             "lengths": s.byte_lengths, "mask_mean": s.mask_mean, "psnr_rgb": m.psnr, "msssim_rgb": m.msssim}
            for s, m in zip(coded["stats"], measurements)
        ],
    }
    write_json(stats, os.path.join(run_dir, "stats.json"))
    if cfg.extra.get("recon"):
        write_yuv420(rgb_to_yuv420_bt601(coded["recons"]), cfg.extra["recon"])
    logger.info(f"[cmd_encode] {name} -> {output} | {nbytes} bytes | bpp={stats['bpp']:.4f}")
    return {"container": output, "bytes": nbytes, "model_id": session.model_id, "bpp": stats["bpp"]}


def cmd_decode(cfg: RunConfig, run_dir: str) -> Dict:
    model, _, _ = load_checkpoint(cfg.model)
    bs = read_container(cfg.inputs[0])
    session = session_for_stream(model, bs.header, frames_to_code=max(cfg.frames, len(bs.frames)))
    frames = decode_sequence(session, bs)
    output = cfg.output or os.path.join(run_dir, "decoded.yuv")
    write_yuv420(rgb_to_yuv420_bt601(frames), output)
    logger.info(f"[cmd_decode] {cfg.inputs[0]} -> {output} | {len(frames)} frames")
    return {"output": output, "frames": len(frames), "bpp": bs.bpp(), "model_id": session.model_id}


def evaluate_models(checkpoints: Sequence[str], sources: Sequence[str], cfg: RunConfig):
    """Per sequence, one RD point per checkpoint (lambda)."""
    per_sequence: Dict[str, list] = {}
    pooled = []
    first_model = None
    dump = cfg.extra.get("dump_masks")
    for k, path in enumerate(checkpoints):
        model, model_cfg, _ = load_checkpoint(path)
        if first_model is None:
            first_model = model
        measurements: Dict[str, List[FrameMeasurement]] = {}
        for spec in sources:
            name, frames = load_frames(spec, model_cfg.alignment, cfg.crop, cfg.frames)
            session = CodecSession(model, cfg.codec_config(), frames[0].height, frames[0].width)
            dump_dir = os.path.join(dump, f"model{k}", name) if dump else None
            measurements[name], _ = measure(session, frames, dump_dir=dump_dir)
        metric = "psnr_rgb" if cfg.metric is Metric.MSE else "msssim_rgb"
        pooled.append(pool_rd_points(measurements, metric, "dataset")["dataset"])
        for seq, point in pool_rd_points(measurements, metric, "sequence").items():
            per_sequence.setdefault(seq, []).append(point)
        logger.info(f"[evaluate_models] {path} | {pooled[-1]}")
    return pooled, per_sequence, first_model


def channel_profiles(model, cfg: RunConfig) -> Dict[str, Dict]:
    """Per sequence, the descending per-channel share of inter main-latent bits."""
    profiles = {}
    for spec in cfg.inputs:
        name, frames = load_frames(spec, model.cfg.alignment, cfg.crop, cfg.frames)
        session = CodecSession(model, cfg.codec_config(), frames[0].height, frames[0].width)
        coded = min(len(frames), session.config.frames_to_code)
        if all(session.is_intra(i) for i in range(coded)):
            logger.warning(f"[channel_profiles] {name} has no P-frame, skipped")
            continue
        shares = channel_bit_profile(session, frames)
        profiles[name] = {"top8_share": top_share(shares, 8), "shares": shares}
    return profiles


def cmd_eval(cfg: RunConfig, run_dir: str) -> Dict:
    checkpoints = cfg.extra.get("models") or ([cfg.model] if cfg.model else [])
    if not checkpoints:
        raise ConfigurationError("eval needs --model or --models")
    label = cfg.extra.get("label", "model")
    pooled, per_sequence, model = evaluate_models(checkpoints, cfg.inputs, cfg)
    curves_path = write_json({label: pooled}, os.path.join(run_dir, "curves.json"))
    write_json({label: per_sequence}, os.path.join(run_dir, "per_sequence.json"))
    write_csv([{"label": label, "bpp": p.bpp, "quality": p.quality, "metric": p.metric} for p in pooled],
              os.path.join(run_dir, "curves.csv"))
    report = complexity_report(model)
    write_json(report, os.path.join(run_dir, "complexity.json"))
    profile_path = write_json(channel_profiles(model, cfg), os.path.join(run_dir, "channel_profile.json"))
    return {"curves": curves_path, "points": len(pooled), "channel_profile": profile_path}


def cmd_ablate(cfg: RunConfig, run_dir: str) -> Dict:
    study = cfg.extra.get("study", "mask")
    if study not in STUDIES:
        raise ConfigurationError(f"unknown ablation study {study!r}, expected one of {sorted(STUDIES)}")
    anchor = cfg.extra.get("anchor") or DEFAULT_ANCHORS[study]
    variants = list(STUDIES[study])

    if cfg.extra.get("curves"):
        with open(cfg.extra["curves"], "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        curves = {v: {s: [RdPoint(**p) for p in pts] for s, pts in seqs.items()} for v, seqs in raw.items()}
    else:
        with open(cfg.extra["cells"], "r", encoding="utf-8") as fh:
            cells: Dict[str, List[str]] = json.load(fh)
        curves = {}
        for variant, checkpoints in cells.items():
            present = [c for c in checkpoints if os.path.exists(c)]
            if not present:
                logger.warning(f"[cmd_ablate] no checkpoints found for {variant}")
                continue
            mode = STUDIES[study][variant][1] if variant in STUDIES[study] else cfg.mask_mode
            cell_cfg = cfg.model_copy(update={"mask_mode": mode})
            _, curves[variant], _ = evaluate_models(present, cfg.inputs, cell_cfg)

    ladder = build_lambda_ladder(cfg.metric, cfg.preset)
    report = ablation_matrix(curves, anchor, variants, min_points=min(MIN_POINTS, len(ladder)))
    write_json(report, os.path.join(run_dir, "ablation.json"))
    write_csv(report.rows, os.path.join(run_dir, "ablation.csv"))
    return {"anchor": anchor, "rows": len(report.rows), "missing": report.missing}


def cmd_plot(cfg: RunConfig, run_dir: str) -> Dict:
    curves = load_curves(cfg.inputs[0])
    output = cfg.output or os.path.join(run_dir, "rd.png")
    plot_rd_curves(curves, output, title=cfg.extra.get("title", ""))
    return {"plot": output}


def cmd_sandbox(cfg: RunConfig, run_dir: str) -> Dict:
    sandbox_cfg = SandboxConfig(seed=cfg.seed, **{k: v for k, v in cfg.extra.items()
                                                  if k in SandboxConfig.model_fields})
    rows = sandbox_table(empirical_entropy_sandbox(sandbox_cfg))
    output = cfg.output or os.path.join(run_dir, "sandbox.json")
    write_json(rows, output)
    return {"table": output}


COMMANDS = {
    Command.TRAIN: cmd_train,
    Command.ENCODE: cmd_encode,
    Command.DECODE: cmd_decode,
    Command.EVAL: cmd_eval,
    Command.ABLATE: cmd_ablate,
    Command.PLOT: cmd_plot,
    Command.SANDBOX: cmd_sandbox,
}

# Subcommands that need a checkpoint / at least one input
NEEDS_MODEL = {Command.ENCODE, Command.DECODE}
NEEDS_INPUT = {Command.ENCODE, Command.DECODE, Command.EVAL, Command.PLOT}


# ──────────────────────────────────────────────
# Argument parsing
# ──────────────────────────────────────────────
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=sorted(PRESETS), default="toy")
    common.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.MSE.value)
    common.add_argument("--lambda-index", type=int, default=0)
    common.add_argument("--mask-mode", choices=[m.value for m in MaskMode], default=MaskMode.LEARNED.value)
    common.add_argument("--cstb-variant", choices=[v.value for v in CstbVariant])
    common.add_argument("--context", choices=[k.value for k in ContextKind])
    common.add_argument("--ctm", choices=["on", "off"])
    common.add_argument("--intra-period", type=int, default=32)
    common.add_argument("--frames", type=int, default=96)
    common.add_argument("--seed", type=int, default=int(os.getenv("MASKCRT_SEED", "0")))
    common.add_argument("--crop", action="store_true", help="centre-crop inputs to the model alignment")
    common.add_argument("--model", help="checkpoint path")
    common.add_argument("--input", dest="inputs", action="append", default=[],
                        help="path.yuv:WIDTHxHEIGHT[:name], a container, or a curves JSON; repeatable")
    common.add_argument("--output")
    common.add_argument("--run-dir")

    parser = argparse.ArgumentParser(prog="maskcrt", description="Masked conditional residual video codec lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common])
    p.add_argument("--phases", nargs="+")
    p.add_argument("--epoch-scale", type=float)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("encode", parents=[common])
    p.add_argument("--forced-intra", type=int, nargs="*", default=[])
    p.add_argument("--recon", help="also write the encoder-side reconstruction as YUV420")
    p.add_argument("--dump-masks", metavar="DIR", help="write per P-frame mask PNGs, panels and .flo flows")

    sub.add_parser("decode", parents=[common])

    p = sub.add_parser("eval", parents=[common])
    p.add_argument("--models", nargs="+", help="one checkpoint per lambda")
    p.add_argument("--label", default="model")
    p.add_argument("--dump-masks", metavar="DIR", help="write per P-frame mask PNGs, panels and .flo flows")

    p = sub.add_parser("ablate", parents=[common])
    p.add_argument("--study", choices=sorted(STUDIES), default="mask")
    p.add_argument("--anchor")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--cells", help="JSON {variant: [checkpoint per lambda]}")
    group.add_argument("--curves", help="JSON {variant: {sequence: [RdPoint]}}")

    p = sub.add_parser("plot", parents=[common])
    p.add_argument("--title", default="")

    p = sub.add_parser("sandbox", parents=[common])
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--occlusion-fraction", type=float)
    return parser


EXTRA_KEYS = (
    "phases", "epoch_scale", "steps_per_epoch", "batch_size", "forced_intra", "recon", "models", "label",
    "study", "anchor", "cells", "curves", "title", "height", "width", "occlusion_fraction", "dump_masks",
)


def to_run_config(args: argparse.Namespace) -> RunConfig:
    extra = {k: getattr(args, k) for k in EXTRA_KEYS if getattr(args, k, None) not in (None, [])}
    return RunConfig(
        command=Command(args.command),
        model=args.model,
        inputs=args.inputs,
        output=args.output,
        run_dir=args.run_dir,
        preset=args.preset,
        metric=Metric(args.metric),
        mask_mode=MaskMode(args.mask_mode),
        context_kind=ContextKind(args.context) if args.context else None,
        cstb_variant=CstbVariant(args.cstb_variant) if args.cstb_variant else None,
        ctm=None if args.ctm is None else args.ctm == "on",
        seed=args.seed,
        lambda_index=args.lambda_index,
        intra_period=args.intra_period,
        frames=args.frames,
        crop=args.crop,
        extra=extra,
    )


def run(cfg: RunConfig) -> Dict:
    if cfg.command in NEEDS_MODEL and not cfg.model:
        raise ConfigurationError(f"{cfg.command.value} needs --model")
    if cfg.command in NEEDS_INPUT and not cfg.inputs:
        raise ConfigurationError(f"{cfg.command.value} needs --input")
    run_dir = run_dir_for(cfg)
    os.makedirs(run_dir, exist_ok=True)
    logger.info(f"[{cfg.command.value}] run_dir={run_dir}")
    result = COMMANDS[cfg.command](cfg, run_dir)
    checkpoint_hash = result.get("model_id")
    if checkpoint_hash is None and cfg.model and os.path.exists(cfg.model):
        checkpoint_hash = model_id(load_checkpoint(cfg.model)[0])
    write_manifest(cfg, run_dir, result=result, checkpoint_hash=checkpoint_hash)
    return result


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run(to_run_config(args))
    except CodecError as e:
        logger.error(f"[{args.command}] {type(e).__name__}: {e}")
        return 2
    except Exception as e:
        logger.error(f"[{args.command}] unexpected error: {e}")
        raise CustomException(e, sys)
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
