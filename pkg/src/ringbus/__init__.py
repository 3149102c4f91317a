"""Simulator and analysis toolkit for contention on a CPU ring interconnect."""

from . import cache, covert, model, ringsim, sidechannel, topology
from .model import ContentionScenario, ContentionVerdict, SenderMode, predict
from .ringsim import SimConfig, Simulator

__all__ = [
    "ContentionScenario",
    "ContentionVerdict",
    "SenderMode",
    "SimConfig",
    "Simulator",
    "cache",
    "covert",
    "model",
    "predict",
    "ringsim",
    "sidechannel",
    "topology",
]

__version__ = "0.1.0"
