"""Antenna-position optimization for fluid-antenna blind interference alignment.

Modules: ``numerics`` (2x2 complex linear algebra), ``channel`` (field-response
channel and CSI errors), ``bia`` (alignment schedule and robust rate), ``env``
(position MDP), ``policy`` (MLP actor/critic), ``trainers`` (GRPO and PPO),
``baselines`` (MaximumGain/RandomGain) and ``harness`` (experiments, CSV/JSON).
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
