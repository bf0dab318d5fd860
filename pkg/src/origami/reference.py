"""Geometry of the three-stage scene-labeling ConvNet used as the benchmark."""
from __future__ import annotations

from .golden import RELU, LayerSpec

REFERENCE_CHANNELS = (3, 16, 64, 256)
CLASSIFIER_SIZES = (256, 64, 8)


def reference_layers(height: int = 240, width: int = 320, kernel: int = 7) -> list:
    """Stages 1-3: 7x7 convolutions, ReLU, 2x2 max-pooling after stages 1 and 2."""
    layers = []
    h, w = height, width
    for i, (cin, cout) in enumerate(zip(REFERENCE_CHANNELS, REFERENCE_CHANNELS[1:])):
        last = i == len(REFERENCE_CHANNELS) - 2
        spec = LayerSpec(cin, cout, kernel, kernel, h, w, RELU, None if last else (2, 2), f"stage{i + 1}")
        layers.append(spec)
        h, w = spec.output_h, spec.output_w
    return layers


def classifier_shapes() -> list:
    """(out, in) weight shapes of the pixel-wise classifier."""
    return [(o, i) for i, o in zip(CLASSIFIER_SIZES, CLASSIFIER_SIZES[1:])]
