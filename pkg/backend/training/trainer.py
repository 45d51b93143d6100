import json
import os
import sys
from datetime import datetime, timezone
from typing import Callable, Dict, Generator, List, Optional

import torch
from langgraph.graph import END, START, StateGraph
from torch.utils.data import Dataset

from backend.constants import PhaseName, TrainState
from backend.constants.presets import TrainConfig, build_lambda_ladder
from backend.training.data import SyntheticClipConfig, SyntheticClipDataset
from backend.training.phases import PhaseRunner, TrainPhase, build_schedule
from backend.utils.checkpoint import save_checkpoint
from backend.utils.exception import CustomException, TrainingDivergedError
from backend.utils.logger import setup_logger

logger = setup_logger("trainer")


def synthetic_data_factory(cfg: TrainConfig, clips: int = 64,
                           corpus: Optional[SyntheticClipConfig] = None) -> Callable[[int], Dataset]:
    corpus = corpus or SyntheticClipConfig(height=cfg.crop, width=cfg.crop)
    return lambda num_frames: SyntheticClipDataset(clips, num_frames, corpus, seed=cfg.seed)


class Trainer:
    """
    Staged training of one VideoCodec at one lambda, compiled as a LangGraph workflow:

        START -> phase_node -(more phases)-> phase_node
                            -(done / diverged)-> manifest_node -> END

    Each phase node appends its summary to ``history``; the manifest node
    writes the final checkpoint and ``manifest.json`` into ``run_dir``.
    """

    def __init__(self, model, cfg: TrainConfig, run_dir: str,
                 data_factory: Optional[Callable[[int], Dataset]] = None,
                 phases: Optional[List[PhaseName | str]] = None,
                 epoch_overrides: Optional[Dict[str, int]] = None,
                 preset: Optional[str] = None) -> None:
        self.model = model.to(cfg.device)
        self.cfg = cfg
        self.run_dir = run_dir
        self.lam = build_lambda_ladder(cfg.metric, preset or model.cfg.preset)[cfg.lambda_index]
        self.schedule: List[TrainPhase] = build_schedule(cfg.epoch_scale, phases, epoch_overrides)
        self.runner = PhaseRunner(
            self.model, cfg, self.lam, run_dir, data_factory or synthetic_data_factory(cfg)
        )
        os.makedirs(run_dir, exist_ok=True)
        self.graph = self._build_graph()

    def _phase_node(self, state: TrainState) -> dict:
        index = state["phase_index"]
        phase = self.schedule[index]
        logger.info(f"[phase_node] {index + 1}/{len(self.schedule)} {phase.name.value} | "
                    f"frames={phase.num_frames} lr={phase.lr} epochs={phase.epochs}")
        try:
            summary = self.runner.run_phase(phase)
        except TrainingDivergedError as e:
            logger.error(f"[phase_node] {phase.name.value} diverged | snapshot={e.snapshot}")
            return {
                "diverged": True,
                "snapshot": e.snapshot or "",
                "history": [{"phase": phase.name.value, "diverged": True, "error": str(e)}],
            }
        return {"phase_index": index + 1, "history": [summary]}

    def _manifest_node(self, state: TrainState) -> dict:
        checkpoint = os.path.join(self.run_dir, "model.pt")
        mid = save_checkpoint(self.model, self.model.cfg, checkpoint, extra={
            "lambda": self.lam, "train_config": self.cfg.model_dump(mode="json"),
        })
        manifest = {
            "command": "train",
            "created": datetime.now(timezone.utc).isoformat(),
            "seed": self.cfg.seed,
            "lambda": self.lam,
            "train_config": self.cfg.model_dump(mode="json"),
            "model_config": self.model.cfg.model_dump(mode="json"),
            "schedule": [p.model_dump(mode="json") for p in self.schedule],
            "history": [{k: v for k, v in h.items() if k != "step_losses"} for h in state.get("history", [])],
            "diverged": state.get("diverged", False),
            "snapshot": state.get("snapshot"),
            "checkpoint": checkpoint,
            "model_id": mid,
        }
        path = os.path.join(self.run_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
        logger.info(f"[manifest_node] {path} | model_id={mid}")
        return {"manifest_path": path}

    def _decide_after_phase(self, state: TrainState) -> str:
        if state.get("diverged"):
            return "manifest_node"
        if state["phase_index"] < len(self.schedule):
            return "phase_node"
        return "manifest_node"

    def _build_graph(self):
        """Construct and compile the phase loop."""
        try:
            workflow = StateGraph(TrainState)

            workflow.add_node("phase_node", self._phase_node)
            workflow.add_node("manifest_node", self._manifest_node)

            workflow.add_edge(START, "phase_node")
            workflow.add_conditional_edges(
                "phase_node",
                self._decide_after_phase,
                {
                    "phase_node": "phase_node",
                    "manifest_node": "manifest_node",
                }
            )
            workflow.add_edge("manifest_node", END)

            graph = workflow.compile()
            logger.info(f"Training graph compiled | {len(self.schedule)} phases")
            return graph

        except Exception as e:
            logger.error(f"Error building graph: {e}")
            raise CustomException(e, sys)

    def _initial_state(self) -> TrainState:
        torch.manual_seed(self.cfg.seed)
        return {"phase_index": 0, "history": []}

    def _graph_config(self) -> dict:
        # Two graph steps per phase plus the manifest
        return {"recursion_limit": 2 * len(self.schedule) + 10}

    def run(self) -> TrainState:
        """Run every phase; raises TrainingDivergedError after writing the manifest on NaN."""
        logger.info(f"Training started | lambda={self.lam} seed={self.cfg.seed} run_dir={self.run_dir}")
        try:
            result = self.graph.invoke(self._initial_state(), config=self._graph_config())
        except Exception as e:
            logger.error(f"Error in run: {e}")
            raise CustomException(e, sys)
        if result.get("diverged"):
            raise TrainingDivergedError(
                f"training diverged, see {result.get('manifest_path')}", snapshot=result.get("snapshot")
            )
        logger.info(f"Training completed | manifest={result.get('manifest_path')}")
        return result

    def stream(self) -> Generator:
        """Yields (node_name, state_update) as each node completes."""
        try:
            for event in self.graph.stream(self._initial_state(), config=self._graph_config()):
                for node_name, update in event.items():
                    logger.info(f"Stream event: {node_name}")
                    yield node_name, update
        except Exception as e:
            logger.error(f"Error in stream: {e}")
            raise CustomException(e, sys)
