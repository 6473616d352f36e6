"""Embedding model backends.

Two kinds behind one interface:

- ``clip:<checkpoint>`` wraps a real CLIP-family checkpoint through
  transformers (requires the weights to be available locally or in the
  HF cache) and uses the model's own published preprocessing.
- ``tiny[:<seed>]`` instantiates a small randomly-initialized CLIP
  architecture from config, fully offline and deterministic for a given
  seed. It produces meaningless but stable embeddings, which is exactly
  what protocol and integration tests need.
"""

from __future__ import annotations

import io

import numpy as np
import torch
from PIL import Image as PILImage

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _projected(features) -> torch.Tensor:
    """Projected feature vector from either transformers return style.

    Older releases return the projected tensor directly; newer ones return
    a model-output object carrying it in pooler_output.
    """
    if hasattr(features, "pooler_output"):
        features = features.pooler_output
    return features[0]


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for b in text.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


class TinyClipBackend:
    """Randomly initialized small CLIP model, deterministic per seed.

    Text is tokenized by hashing lowercase words into the toy vocabulary
    between the BOS/EOS markers; images are resized to the model's input
    size and normalized to [-1, 1].
    """

    CONTEXT = 77
    VOCAB = 512
    BOS, EOS = 0, 1

    def __init__(self, seed: int = 0):
        from transformers import CLIPConfig, CLIPModel

        config = CLIPConfig(
            text_config={
                "hidden_size": 64,
                "intermediate_size": 128,
                "num_hidden_layers": 2,
                "num_attention_heads": 2,
                "vocab_size": self.VOCAB,
                "max_position_embeddings": self.CONTEXT,
                "bos_token_id": self.BOS,
                "eos_token_id": self.EOS,
            },
            vision_config={
                "hidden_size": 64,
                "intermediate_size": 128,
                "num_hidden_layers": 2,
                "num_attention_heads": 2,
                "image_size": 64,
                "patch_size": 16,
            },
            projection_dim=32,
        )
        torch.manual_seed(seed)
        self.model = CLIPModel(config).eval()
        self.image_size = 64
        self.dim = 32
        self.name = f"tiny-clip/seed{seed}"
        self.preprocessing = f"resize-{self.image_size},scale[-1,1]"

    def _tokenize(self, text: str) -> torch.Tensor:
        words = text.lower().split()[: self.CONTEXT - 2]
        ids = [self.BOS]
        ids += [2 + _fnv1a(w) % (self.VOCAB - 2) for w in words]
        ids.append(self.EOS)
        return torch.tensor([ids], dtype=torch.long)

    @torch.no_grad()
    def embed_text(self, text: str) -> np.ndarray:
        ids = self._tokenize(text)
        feats = self.model.get_text_features(
            input_ids=ids, attention_mask=torch.ones_like(ids)
        )
        return _projected(feats).numpy().astype(np.float64)

    @torch.no_grad()
    def embed_image(self, png_bytes: bytes) -> np.ndarray:
        with PILImage.open(io.BytesIO(png_bytes)) as im:
            im = im.convert("RGB").resize(
                (self.image_size, self.image_size), PILImage.BICUBIC
            )
            arr = np.asarray(im, dtype=np.float32) / 255.0
        tensor = torch.from_numpy((arr - 0.5) / 0.5).permute(2, 0, 1).unsqueeze(0)
        feats = self.model.get_image_features(pixel_values=tensor)
        return _projected(feats).numpy().astype(np.float64)


class ClipCheckpointBackend:
    """Real CLIP-family checkpoint via transformers."""

    def __init__(self, checkpoint: str, device: str = "cpu"):
        from transformers import CLIPModel, CLIPProcessor

        self.model = CLIPModel.from_pretrained(checkpoint).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(checkpoint)
        self.device = device
        self.dim = int(self.model.config.projection_dim)
        self.name = checkpoint
        self.preprocessing = type(self.processor.image_processor).__name__

    @torch.no_grad()
    def embed_text(self, text: str) -> np.ndarray:
        inputs = self.processor(
            text=[text], return_tensors="pt", padding=True, truncation=True
        ).to(self.device)
        feats = self.model.get_text_features(**inputs)
        return _projected(feats).cpu().numpy().astype(np.float64)

    @torch.no_grad()
    def embed_image(self, png_bytes: bytes) -> np.ndarray:
        with PILImage.open(io.BytesIO(png_bytes)) as im:
            im = im.convert("RGB")
            inputs = self.processor(images=[im], return_tensors="pt").to(self.device)
        feats = self.model.get_image_features(**inputs)
        return _projected(feats).cpu().numpy().astype(np.float64)


def load_backend(spec: str, device: str = "cpu"):
    """Backend from a spec string: `tiny`, `tiny:<seed>`, or `clip:<name>`."""
    if spec == "tiny":
        return TinyClipBackend()
    if spec.startswith("tiny:"):
        return TinyClipBackend(seed=int(spec.split(":", 1)[1]))
    if spec.startswith("clip:"):
        return ClipCheckpointBackend(spec.split(":", 1)[1], device=device)
    raise ValueError(f"unknown model spec {spec!r}")
