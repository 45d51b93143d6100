import hashlib
import os
from typing import Any, Dict, Optional, Tuple

import torch
from torch import nn

from backend.constants.presets import ModelConfig
from backend.utils.exception import ConfigurationError
from backend.utils.logger import setup_logger

logger = setup_logger("checkpoint")

FORMAT_VERSION = 1


def _digest(module: nn.Module):
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode("utf-8"))
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h


def model_id(module: nn.Module) -> str:
    """First 16 hex digits of SHA-256 over the sorted named weights."""
    return _digest(module).hexdigest()[:16]


def parameter_hashes(groups: Dict[str, nn.Module]) -> Dict[str, str]:
    return {name: _digest(module).hexdigest() for name, module in groups.items()}


def save_checkpoint(model: nn.Module, config: ModelConfig, path: str,
                    extra: Optional[Dict[str, Any]] = None) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    mid = model_id(model)
    torch.save(
        {
            "format_version": FORMAT_VERSION,
            "config": config.model_dump(mode="json"),
            "state_dict": model.state_dict(),
            "model_id": mid,
            "extra": extra or {},
        },
        path,
    )
    logger.info(f"[save_checkpoint] {path} | model_id={mid}")
    return mid


def load_checkpoint(path: str, map_location: str = "cpu") -> Tuple[nn.Module, ModelConfig, Dict[str, Any]]:
    """Rebuild the VideoCodec stored at ``path``; returns (model, config, raw payload)."""
    from backend.codec.video import VideoCodec

    payload = torch.load(path, map_location=map_location)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigurationError(
            f"checkpoint format_version {version} not supported, expected {FORMAT_VERSION}"
        )
    config = ModelConfig.model_validate(payload["config"])
    model = VideoCodec(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    logger.info(f"[load_checkpoint] {path} | preset={config.preset} model_id={model_id(model)}")
    return model, config, payload
