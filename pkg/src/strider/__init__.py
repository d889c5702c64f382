"""strider: a real-time character motion controller.

A transformer encoder-decoder predicts the next skeletal pose from
multi-scale past-pose history, conditioned on a user-controlled trajectory;
an autoregressive session turns that into continuous, steerable motion.
"""

__version__ = "0.1.0"

from .model import ModelConfig, default_config, tiny_config  # noqa: F401
from .session import ControlInput, Session, run_script  # noqa: F401
from .skeleton import GAITS, default_skeleton  # noqa: F401
from .train import TrainConfig, fit  # noqa: F401
