import numpy as np
import pytest
import torch

from egoreach.geometry import CameraIntrinsics
from egoreach.model import GridSpec, ModelConfig
from egoreach.synthetic import SyntheticWorldConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240813)


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0, width=1920, height=1080)


def tiny_world(**overrides) -> SyntheticWorldConfig:
    """Cheap-to-generate world for unit tests."""
    defaults = dict(render_size=16, length_min=8, length_max=24, length_mean=12, distractors=4)
    defaults.update(overrides)
    return SyntheticWorldConfig(**defaults)


def tiny_model_config(**overrides) -> ModelConfig:
    defaults = dict(
        visual_dim=16,
        hand_dim=8,
        fused_dim=16,
        lstm_hidden=16,
        grid=GridSpec(bins=16),
        image_size=16,
        conv_channels=(4, 8, 8, 8),
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


@pytest.fixture
def tiny_cfg():
    return tiny_world()


@pytest.fixture
def tiny_clip(tiny_cfg):
    from egoreach.synthetic import generate_clip

    return generate_clip(tiny_cfg, rng_seed=42)


@pytest.fixture
def tiny_model():
    from egoreach.model import TargetPredictor

    torch.manual_seed(77)
    return TargetPredictor(tiny_model_config())
