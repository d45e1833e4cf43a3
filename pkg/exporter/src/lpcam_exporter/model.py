"""Multi-label classifier loading and unpooled feature extraction."""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn
from torchvision import models

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def build_classifier(num_classes: int) -> nn.Module:
    """ResNet-50 backbone with a bias-free multi-label head."""
    model = models.resnet50(weights=None)
    model.fc = nn.Linear(model.fc.in_features, num_classes, bias=False)
    return model


def save_checkpoint(model: nn.Module, num_classes: int, path: Path | str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"arch": "resnet50", "num_classes": num_classes, "state_dict": model.state_dict()},
        path,
    )


def load_checkpoint(path: Path | str) -> tuple[nn.Module, int]:
    """Load a checkpoint saved by :func:`save_checkpoint`.

    Plain state dicts are accepted too; the class count is then inferred
    from the head's weight shape.
    """
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(payload, dict) and "state_dict" in payload:
        state = payload["state_dict"]
        num_classes = int(payload["num_classes"])
    else:
        state = payload
        num_classes = int(state["fc.weight"].shape[0])
    model = build_classifier(num_classes)
    model.load_state_dict(state)
    model.eval()
    return model, num_classes


class FeatureExtractor:
    """Evaluates the encoder up to, but not including, the pooling layer."""

    def __init__(self, model: nn.Module):
        self.encoder = nn.Sequential(
            model.conv1,
            model.bn1,
            model.relu,
            model.maxpool,
            model.layer1,
            model.layer2,
            model.layer3,
            model.layer4,
        ).eval()
        self.head_weight = model.fc.weight.detach()

    @property
    def channels(self) -> int:
        return self.head_weight.shape[1]

    @torch.no_grad()
    def features(self, batch: torch.Tensor, flip_average: bool = False) -> torch.Tensor:
        """(B, 3, H, W) image batch -> (B, h, w, C) feature blocks.

        With ``flip_average`` the features of the horizontally flipped
        input are flipped back and averaged in.
        """
        out = self.encoder(batch)
        if flip_average:
            flipped = self.encoder(torch.flip(batch, dims=(-1,)))
            out = 0.5 * (out + torch.flip(flipped, dims=(-1,)))
        return out.permute(0, 2, 3, 1).contiguous()
