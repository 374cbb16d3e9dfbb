import sys
from pathlib import Path

import numpy as np
import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from prunelab.model import Architecture, ConvSpec, build_model  # noqa: E402


def random_architecture(rng: np.random.Generator, max_layers=3, max_channels=8,
                        num_classes=6, image_size=5) -> Architecture:
    """Small random plain-CNN architecture for property tests."""
    n_layers = int(rng.integers(1, max_layers + 1))
    channels = [1] + [int(rng.integers(2, max_channels + 1)) for _ in range(n_layers)]
    specs = []
    for i in range(n_layers):
        k = int(rng.choice([1, 3]))
        specs.append(ConvSpec(channels[i], channels[i + 1], kernel=k, stride=1, pad=k // 2))
    return Architecture((1, image_size, image_size), tuple(specs), num_classes)


@pytest.fixture
def small_model():
    arch = Architecture(
        (1, 6, 6),
        (
            ConvSpec(1, 4, 3, stride=1, pad=1),
            ConvSpec(4, 6, 3, stride=2, pad=1),
        ),
        num_classes=6,
    )
    return build_model(arch, seed=11)
