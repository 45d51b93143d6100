import math
import os
import sys
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import torch
from pydantic import BaseModel, Field
from torch import nn
from torch.utils.data import DataLoader, Dataset

from backend.constants import MaskMode, PhaseName, QuantMode
from backend.constants.presets import TrainConfig
from backend.motion import MotionState
from backend.training.data import build_loader
from backend.training.losses import RdLoss, flow_loss, rd_loss
from backend.utils.checkpoint import parameter_hashes, save_checkpoint
from backend.utils.exception import (
    ConfigurationError,
    ContractViolation,
    CustomException,
    TrainingDivergedError,
)
from backend.utils.logger import setup_logger

logger = setup_logger("train_phases")


class LossKind(str, Enum):
    INTRA_RD = "intra_rd"                  # R + lambda*D(x, x_hat) of the intra codec
    FLOW = "flow"                          # photometric + smoothness, no rate
    MOTION_RD = "motion_rd"                # R_motion + lambda*D(x_t, warp(x_ref, f_hat))
    COMPENSATION_RD = "compensation_rd"    # R_motion + lambda*D(x_t, x_c)
    FRAME_RD = "frame_rd"                  # R_t + lambda*D(x_t, x_hat_t)


def _endless(loader: DataLoader) -> Iterator[torch.Tensor]:
    while True:
        yield from loader


P_MODULES = ["motion_codec", "extrapolator", "mcnet", "mask_generator", "inter_codec"]


class TrainPhase(BaseModel):
    name: PhaseName
    num_frames: int = Field(ge=1)
    trainable: List[str]
    loss_kind: LossKind
    lr: float = Field(gt=0)
    epochs: int = Field(ge=1)
    decoded_references: bool = True
    # Non-detached references and straight-through rounding
    error_propagation: bool = False


TRAINING_PLAN: List[TrainPhase] = [
    TrainPhase(name=PhaseName.INTRA_CODING, num_frames=1, trainable=["intra"],
               loss_kind=LossKind.INTRA_RD, lr=1e-4, epochs=10),
    TrainPhase(name=PhaseName.MOTION_ESTIMATION, num_frames=2, trainable=["flow_estimator"],
               loss_kind=LossKind.FLOW, lr=1e-4, epochs=5),
    TrainPhase(name=PhaseName.MOTION_CODING, num_frames=3, trainable=["extrapolator", "motion_codec"],
               loss_kind=LossKind.MOTION_RD, lr=1e-4, epochs=10, decoded_references=False),
    TrainPhase(name=PhaseName.MOTION_COMPENSATION, num_frames=3, trainable=["mcnet"],
               loss_kind=LossKind.COMPENSATION_RD, lr=1e-4, epochs=5, decoded_references=False),
    TrainPhase(name=PhaseName.INTER_CODING_3F, num_frames=3, trainable=["inter_codec", "mask_generator"],
               loss_kind=LossKind.FRAME_RD, lr=1e-4, epochs=10),
    TrainPhase(name=PhaseName.INTER_CODING_5F, num_frames=5, trainable=["inter_codec", "mask_generator"],
               loss_kind=LossKind.FRAME_RD, lr=1e-4, epochs=5),
    TrainPhase(name=PhaseName.FINETUNE, num_frames=5, trainable=P_MODULES,
               loss_kind=LossKind.FRAME_RD, lr=1e-4, epochs=3),
    TrainPhase(name=PhaseName.FINETUNE_EPA_A, num_frames=5, trainable=P_MODULES,
               loss_kind=LossKind.FRAME_RD, lr=1e-4, epochs=3, error_propagation=True),
    TrainPhase(name=PhaseName.FINETUNE_EPA_B, num_frames=5, trainable=P_MODULES + ["flow_estimator"],
               loss_kind=LossKind.FRAME_RD, lr=1e-5, epochs=3, error_propagation=True),
]


def build_schedule(epoch_scale: float = 1.0, phases: Optional[List[PhaseName | str]] = None,
                   epoch_overrides: Optional[Dict[str, int]] = None) -> List[TrainPhase]:
    """
    The training plan in execution order, epochs scaled by ``epoch_scale``
    (at least one each). ``phases`` keeps a subset, still in plan order.
    """
    keep = None if phases is None else {PhaseName(p) for p in phases}
    epoch_overrides = epoch_overrides or {}
    unknown = set(epoch_overrides) - {p.value for p in PhaseName}
    if unknown:
        raise ConfigurationError(f"epoch overrides name unknown phases: {sorted(unknown)}")

    schedule = []
    for phase in TRAINING_PLAN:
        if keep is not None and phase.name not in keep:
            continue
        epochs = epoch_overrides.get(phase.name.value, max(1, math.ceil(phase.epochs * epoch_scale - 1e-9)))
        schedule.append(phase.model_copy(update={"epochs": epochs}))
    if not schedule:
        raise ConfigurationError(f"no phases selected from {[p.name.value for p in TRAINING_PLAN]}")
    return schedule


class PhaseRunner:
    """Runs one phase of the plan on a VideoCodec: data, optimizer, losses and the freeze check."""

    def __init__(self, model: nn.Module, cfg: TrainConfig, lam: float, run_dir: str,
                 data_factory: Callable[[int], Dataset]):
        self.model = model
        self.cfg = cfg
        self.lam = lam
        self.run_dir = run_dir
        self.data_factory = data_factory
        self.device = torch.device(cfg.device)

    # ──────────────────────────────────────────────
    # Forward passes per loss kind
    # ──────────────────────────────────────────────
    def _aux(self, phase: TrainPhase) -> torch.Tensor:
        groups = self.model.module_groups()
        total = torch.zeros((), device=self.device)
        for name in phase.trainable:
            entropy = getattr(groups[name], "entropy", None)
            if entropy is not None:
                total = total + entropy.aux_loss()
        return total

    def cascade(self, clip: torch.Tensor, phase: TrainPhase) -> Tuple[List[RdLoss], List[torch.Tensor]]:
        """
        Code frames 1..T-1 of ``clip`` (B, T, 3, H, W) after an intra-coded
        frame 0. Returns per-frame losses and the reconstructions, frame 0 first.
        """
        m = self.model
        mask_mode = MaskMode(self.cfg.mask_mode)
        mode = QuantMode.ROUND if phase.error_propagation else QuantMode.NOISE
        b, t, _, h, w = clip.shape

        with torch.no_grad():
            x0_hat, _ = m.intra(clip[:, 0], QuantMode.ROUND)
        state = MotionState(h, w)
        state.push(x0_hat)
        recons = [x0_hat]
        losses: List[RdLoss] = []

        for i in range(1, t):
            x_t = clip[:, i]
            f_c = m.extrapolator.extrapolate(state)
            x_ref = state.latest
            if phase.loss_kind is LossKind.FRAME_RD:
                out = m.p_frame(x_t, x_ref, f_c, mask_mode, mode, straight_through=phase.error_propagation)
                losses.append(rd_loss(x_t, out.x_hat, out.bits, self.lam, self.cfg.metric))
                x_hat, f_hat = out.x_hat, out.f_hat
            else:
                f_t = m.flow_estimator(x_t, x_ref)
                motion = m.motion_codec(f_t, f_c, mode, phase.error_propagation)
                f_hat = motion.decoded
                warped, x_c = m.predict(x_ref, f_hat)
                target = warped if phase.loss_kind is LossKind.MOTION_RD else x_c
                losses.append(rd_loss(x_t, target, motion.bits, self.lam, self.cfg.metric))
                x_hat = x_c
            recons.append(x_hat)
            reference = x_hat if phase.decoded_references else x_t
            state.push(reference, f_hat, detach=not phase.error_propagation)
        return losses, recons

    def step_loss(self, clip: torch.Tensor, phase: TrainPhase) -> torch.Tensor:
        m = self.model
        if phase.loss_kind is LossKind.INTRA_RD:
            x = clip[:, 0]
            x_hat, coding = m.intra(x, QuantMode.NOISE)
            return rd_loss(x, x_hat, coding.bits, self.lam, self.cfg.metric).total + self._aux(phase)
        if phase.loss_kind is LossKind.FLOW:
            return flow_loss(clip[:, 1], clip[:, 0], m.flow_estimator(clip[:, 1], clip[:, 0]))
        losses, _ = self.cascade(clip, phase)
        return torch.stack([l.total for l in losses]).mean() + self._aux(phase)

    # ──────────────────────────────────────────────
    # Phase loop
    # ──────────────────────────────────────────────
    def _snapshot(self, phase: TrainPhase, epoch: int, step: int, clip: torch.Tensor) -> str:
        path = os.path.join(self.run_dir, f"diverged_{phase.name.value}_e{epoch}_s{step}.pt")
        save_checkpoint(self.model, self.model.cfg, path, extra={
            "phase": phase.name.value, "epoch": epoch, "step": step, "batch": clip.detach().cpu(),
        })
        return path

    def run_phase(self, phase: TrainPhase) -> Dict:
        """Train ``phase.trainable``; every other module group must come out bit-identical."""
        groups = self.model.module_groups()
        unknown = set(phase.trainable) - set(groups)
        if unknown:
            raise ConfigurationError(f"{phase.name.value}: unknown module groups {sorted(unknown)}")
        frozen = {name: g for name, g in groups.items() if name not in phase.trainable}
        before = parameter_hashes(frozen)

        for name, g in groups.items():
            g.requires_grad_(name in phase.trainable)
        params = self.model.parameters_of(phase.trainable)
        optimizer = torch.optim.Adam(params, lr=phase.lr)
        loader = build_loader(self.data_factory(phase.num_frames), self.cfg.batch_size, self.cfg.seed)

        self.model.train()
        batches = _endless(loader)
        epoch_losses: List[float] = []
        step_losses: List[float] = []
        try:
            for epoch in range(phase.epochs):
                running = 0.0
                for step in range(self.cfg.steps_per_epoch):
                    clip = next(batches).to(self.device)
                    optimizer.zero_grad(set_to_none=True)
                    loss = self.step_loss(clip, phase)
                    if not torch.isfinite(loss):
                        snapshot = self._snapshot(phase, epoch, step, clip)
                        raise TrainingDivergedError(
                            f"{phase.name.value}: non-finite loss {float(loss)} at epoch {epoch} step {step}",
                            snapshot=snapshot,
                        )
                    loss.backward()
                    torch.nn.utils.clip_grad_norm_(params, self.cfg.grad_clip)
                    optimizer.step()
                    step_losses.append(float(loss))
                    running += float(loss)
                epoch_losses.append(running / self.cfg.steps_per_epoch)
                logger.info(
                    f"[run_phase] {phase.name.value} epoch {epoch + 1}/{phase.epochs} | loss={epoch_losses[-1]:.5f}"
                )
        except TrainingDivergedError:
            raise
        except Exception as e:
            raise CustomException(e, sys)
        finally:
            self.model.requires_grad_(True)
            self.model.eval()

        after = parameter_hashes(frozen)
        changed = sorted(name for name in frozen if before[name] != after[name])
        if changed:
            raise ContractViolation(f"{phase.name.value}: frozen modules changed: {changed}")

        return {
            "phase": phase.name.value,
            "epochs": phase.epochs,
            "lr": phase.lr,
            "trainable": list(phase.trainable),
            "epoch_losses": epoch_losses,
            "step_losses": step_losses,
            "frozen_hashes": after,
        }
