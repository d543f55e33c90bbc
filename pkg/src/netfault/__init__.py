"""netfault: fault localization for data-center networks.

Likelihood-based inference over flow telemetry, a flow-level failure
simulator, hyperparameter calibration, baseline schemes, and an
evaluation/benchmark harness.  The package is wrapped by a FastAPI service
(netfault.service:app) whose thin CLI client is installed as ``netfault``.
"""

__version__ = "0.1.0"

from .model import ModelParams  # noqa: F401
from .topology import Topology, build_fat_tree, build_two_tier  # noqa: F401
