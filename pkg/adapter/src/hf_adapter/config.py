"""Adapter configuration, readable from environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass

TINY_RANDOM = "tiny-random"


@dataclass
class AdapterConfig:
    model_name: str = "google/flan-t5-large"
    device: str = "cpu"
    max_new_tokens: int = 48
    num_beams: int = 1
    dropout_sampling: bool = True
    formality_model: str | None = None  # text-classification checkpoint, optional
    max_cached_models: int = 8
    host: str = "127.0.0.1"
    port: int = 8090

    @classmethod
    def from_env(cls) -> "AdapterConfig":
        cfg = cls()
        cfg.model_name = os.environ.get("MODEL_NAME", cfg.model_name)
        cfg.device = os.environ.get("DEVICE", cfg.device)
        cfg.port = int(os.environ.get("PORT", cfg.port))
        cfg.formality_model = os.environ.get("FORMALITY_MODEL") or None
        if "MAX_NEW_TOKENS" in os.environ:
            cfg.max_new_tokens = int(os.environ["MAX_NEW_TOKENS"])
        if "DROPOUT_SAMPLING" in os.environ:
            cfg.dropout_sampling = os.environ["DROPOUT_SAMPLING"].lower() not in ("0", "false")
        return cfg
