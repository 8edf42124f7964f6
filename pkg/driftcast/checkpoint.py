"""Checkpoint files for forecast models and drift adapters.

A checkpoint is one UTF-8 JSON document; the byte layout is described in
``docs/checkpoint_format.md``.
"""
import json
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from driftcast.exceptions import MissingCheckpoint
from driftcast.nncore import ParamKind, ParamTensor

CHECKPOINT_FORMAT = "driftcast-ckpt-v1"
SECTION_MODEL = "model"
SECTION_ADAPTER = "adapter"


def encode_tensors(params: Sequence[ParamTensor]) -> List[Dict[str, Any]]:
    """Flatten tensors to JSON-ready records (row-major values)."""
    return [
        {
            "name": p.name,
            "kind": p.kind.value,
            "layer_type_id": int(p.layer_type_id),
            "shape": list(p.dims),
            "values": p.values.reshape(-1).tolist(),
        }
        for p in params
    ]


def decode_tensors(records: Sequence[Dict[str, Any]]) -> List[ParamTensor]:
    tensors = []
    for record in records:
        values = np.asarray(record["values"], dtype=np.float64).reshape(record["shape"])
        tensors.append(
            ParamTensor(
                name=record["name"],
                kind=ParamKind(record["kind"]),
                values=values,
                layer_type_id=int(record["layer_type_id"]),
            )
        )
    return tensors


class CheckpointManager:
    """Reads and writes checkpoints below one local directory."""

    def __init__(self, local_dir: str):
        """Initialize the checkpoint manager.

        Args:
            local_dir: Directory that holds checkpoint files
        """
        self.local_dir = local_dir
        os.makedirs(self.local_dir, exist_ok=True)

    def path_for(self, name: str) -> str:
        return os.path.join(self.local_dir, f"{name}.ckpt.json")

    def exists(self, name: str) -> bool:
        return os.path.exists(self.path_for(name))

    def save_checkpoint(
        self,
        name: str,
        section: str,
        params: Sequence[ParamTensor],
        metadata: Optional[Dict[str, Any]] = None,
    ) -> str:
        """Write a checkpoint.

        Args:
            name: File stem, unique per experiment cell
            section: ``model`` or ``adapter``
            params: Tensors in their canonical order
            metadata: Wiring descriptor or adapter layout

        Returns:
            Path of the written file
        """
        payload = {
            "format": CHECKPOINT_FORMAT,
            "section": section,
            "metadata": metadata or {},
            "tensors": encode_tensors(params),
        }
        path = self.path_for(name)
        tmp_path = f"{path}.tmp"
        with open(tmp_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True)
        os.replace(tmp_path, path)
        logger.debug(f"Checkpoint saved: {path}")
        return path


def load_checkpoint(path: str, section: Optional[str] = None) -> Tuple[Dict[str, Any], List[ParamTensor]]:
    """Load a checkpoint file.

    Args:
        path: Checkpoint file
        section: Expected section tag, checked when given

    Returns:
        ``(metadata, tensors)``
    """
    if not os.path.exists(path):
        raise MissingCheckpoint(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise MissingCheckpoint(path, str(e)) from e
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise MissingCheckpoint(path, f"unsupported format {payload.get('format')!r}")
    if section is not None and payload.get("section") != section:
        raise MissingCheckpoint(path, f"expected section {section!r}, found {payload.get('section')!r}")
    logger.info(f"Loaded checkpoint: {path}")
    return payload.get("metadata", {}), decode_tensors(payload["tensors"])
