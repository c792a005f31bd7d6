"""Embedding backends.

``offline:<dim>`` is a deterministic stand-in that hashes inputs into
unit vectors; it needs no model weights, so pipelines and format tests
run anywhere. Any other model id is handed to transformers' CLIP classes
(requires the optional ``clip`` extra and downloadable weights).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ModelLoadFailure


def _unit(rows: np.ndarray) -> np.ndarray:
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class OfflineHashEncoder:
    """Maps each distinct input to a fixed random unit vector."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ModelLoadFailure(f"offline encoder dim must be >= 1, got {dim}")
        self.dim = dim

    def _vector(self, payload: bytes) -> np.ndarray:
        seed = np.frombuffer(hashlib.sha256(payload).digest(), dtype=np.uint32)
        return np.random.default_rng(seed).standard_normal(self.dim)

    def encode_texts(self, texts) -> np.ndarray:
        rows = np.stack([self._vector(b"text:" + t.encode("utf-8")) for t in texts])
        return _unit(rows)

    def encode_images(self, images) -> np.ndarray:
        rows = []
        for img in images:
            rgb = img.convert("RGB")
            payload = b"image:%dx%d:" % rgb.size + rgb.tobytes()
            rows.append(self._vector(payload))
        return _unit(np.stack(rows))


class ClipEncoder:
    """Pretrained CLIP via transformers; weights stay frozen."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadFailure(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id).to(device).eval()
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadFailure(f"cannot load {model_id!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.dim = int(self._model.config.projection_dim)

    def encode_texts(self, texts) -> np.ndarray:
        inputs = self._processor(text=list(texts), return_tensors="pt", padding=True)
        inputs = {k: v.to(self._device) for k, v in inputs.items()}
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return _unit(feats.cpu().numpy().astype(np.float64))

    def encode_images(self, images) -> np.ndarray:
        inputs = self._processor(images=list(images), return_tensors="pt")
        inputs = {k: v.to(self._device) for k, v in inputs.items()}
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return _unit(feats.cpu().numpy().astype(np.float64))


def load_encoder(model_id: str, device: str = "cpu"):
    if model_id.startswith("offline:"):
        try:
            dim = int(model_id.split(":", 1)[1])
        except ValueError as exc:
            raise ModelLoadFailure(f"bad offline encoder spec {model_id!r}") from exc
        return OfflineHashEncoder(dim)
    if model_id.startswith("clip:"):
        model_id = model_id.split(":", 1)[1]
    return ClipEncoder(model_id, device)
