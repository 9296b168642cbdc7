__version__ = "0.1.0"

from .models import Box, QuantBox, Trajectory, Config  # noqa: E402
from .config import default_config, load_config  # noqa: E402
from .pipeline import DatasetBuilder, build_dataset  # noqa: E402
from .metrics import Evaluator, evaluate_run  # noqa: E402
from .harness import TrackingHarness  # noqa: E402

__all__ = ["Box", "QuantBox", "Trajectory", "Config", "default_config", "load_config",
           "DatasetBuilder", "build_dataset", "Evaluator", "evaluate_run", "TrackingHarness"]
