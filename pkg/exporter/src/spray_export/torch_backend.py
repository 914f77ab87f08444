"""PyTorch checkpoint loading and the activation/ablation hook machinery.

Images cross the protocol as RGB float32 in [0, 1]; the ImageNet
normalization the torchvision backbones expect is applied here, so the
pipeline's "zero pixels = black" perturbation semantics hold at the
protocol boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ARCHITECTURES = ("deeplabv3", "fcn", "toy")
BACKBONES = ("efficientnet-b0", "mobilenetv3", "resnet50")

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass
class CheckpointSpec:
    architecture: str
    backbone: str | None = None
    weights: str | None = None
    layer: str | None = None   # named module whose output is the CAM substrate
    classes: int = 7
    seed: int = 0              # toy architecture only

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.architecture != "toy":
            if self.backbone not in BACKBONES:
                raise ValueError(f"unknown backbone {self.backbone!r}")
            if not self.layer:
                raise ValueError("an activation-layer selector is required")
        if self.classes < 1:
            raise ValueError("class count must be positive")


def _build_torchvision_model(spec: CheckpointSpec):
    import torch
    from torchvision.models import efficientnet_b0, mobilenet_v3_large, resnet50
    from torchvision.models._utils import IntermediateLayerGetter
    from torchvision.models.segmentation.deeplabv3 import (DeepLabHead,
                                                           DeepLabV3)
    from torchvision.models.segmentation.fcn import FCN, FCNHead

    arch_cls, head_cls = ((DeepLabV3, DeepLabHead)
                          if spec.architecture == "deeplabv3" else (FCN, FCNHead))
    classes = spec.classes

    if spec.backbone == "resnet50":
        body = resnet50(weights=None, replace_stride_with_dilation=[False, True, True])
        backbone = IntermediateLayerGetter(body, {"layer4": "out", "layer3": "aux"})
        main_ch, aux_ch = 2048, 1024
    elif spec.backbone == "mobilenetv3":
        features = mobilenet_v3_large(weights=None, dilated=True).features
        names = [str(i) for i in range(len(features))]
        backbone = IntermediateLayerGetter(features,
                                           {names[-1]: "out", names[4]: "aux"})
        main_ch = features[-1].out_channels
        aux_ch = features[4].out_channels
    elif spec.backbone == "efficientnet-b0":
        features = efficientnet_b0(weights=None).features
        # auxiliary stem branches from stage 3 of the backbone
        backbone = IntermediateLayerGetter(features, {"8": "out", "3": "aux"})
        main_ch, aux_ch = 1280, 40
    else:
        raise ValueError(f"unknown backbone {spec.backbone!r}")

    model = arch_cls(backbone, head_cls(main_ch, classes), FCNHead(aux_ch, classes))
    if spec.weights:
        state = torch.load(spec.weights, map_location="cpu", weights_only=False)
        for key in ("state_dict", "model"):
            if isinstance(state, dict) and key in state and isinstance(state[key], dict):
                state = state[key]
        model.load_state_dict(state)
    model.eval()
    return model


class TorchEngine:
    """Inference wrapper capturing one layer's activations with a forward
    hook; ablation multiplies that layer's output by a channel mask."""

    def __init__(self, spec: CheckpointSpec):
        import torch

        self._torch = torch
        self.spec = spec
        self.model = _build_torchvision_model(spec)
        modules = dict(self.model.named_modules())
        if spec.layer not in modules:
            candidates = [n for n in modules if n][:12]
            raise ValueError(f"layer {spec.layer!r} not found; examples: {candidates}")
        self._captured = None
        self._mask = None
        modules[spec.layer].register_forward_hook(self._hook)
        self.num_classes = spec.classes
        with torch.no_grad():
            probe = torch.zeros(1, 3, 64, 64)
            self.model(probe)
        if self._captured is None:
            raise ValueError(f"layer {spec.layer!r} produced no tensor output")
        self.num_channels = self._captured.shape[1]

    def _hook(self, module, inputs, output):
        if self._mask is not None:
            output = output * self._mask.to(output.dtype)[None, :, None, None]
        self._captured = output
        return output

    def forward(self, image: np.ndarray, ablate=frozenset()):
        torch = self._torch
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError("expected a (3, H, W) image")
        for channel in ablate:
            if not 0 <= channel < self.num_channels:
                raise ValueError(f"ablation channel {channel} outside "
                                 f"[0, {self.num_channels})")
        normalized = (image - _IMAGENET_MEAN[:, None, None]) \
            / _IMAGENET_STD[:, None, None]
        batch = torch.from_numpy(np.ascontiguousarray(normalized))[None]
        if ablate:
            mask = torch.ones(self.num_channels)
            mask[sorted(ablate)] = 0.0
            self._mask = mask
        else:
            self._mask = None
        self._captured = None
        with torch.no_grad():
            result = self.model(batch)
        main = result["out"][0].numpy().astype(np.float32)
        aux = (result["aux"][0].numpy().astype(np.float32)
               if "aux" in result else main.copy())
        acts = self._captured[0].detach().numpy().astype(np.float32)
        return main, aux, acts


def make_engine(spec: CheckpointSpec):
    """Engine for a checkpoint spec: (forward fn, classes, channels)."""
    if spec.architecture == "toy":
        from .toy import ToyModel

        model = ToyModel(spec.seed, spec.classes)
        return model.forward, model.num_classes, model.num_channels
    engine = TorchEngine(spec)
    return engine.forward, engine.num_classes, engine.num_channels
