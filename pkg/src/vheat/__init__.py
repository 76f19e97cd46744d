"""Heat conduction operator, a desk-scale vHeat backbone and its verification tools."""

from .backbone import ModelConfig, VHeat, build_model, micro_config, tiny_config
from .checkpoint import load_checkpoint, save_checkpoint
from .dct import DctPlan, build_plan, dct2d, idct2d
from .hco import FveTable, ThermalField, frequency_grid, hco_forward, predict_k, resize_fve

__version__ = "0.1.0"

__all__ = [
    "DctPlan", "FveTable", "ModelConfig", "ThermalField", "VHeat", "build_model", "build_plan", "dct2d",
    "frequency_grid", "hco_forward", "idct2d", "load_checkpoint", "micro_config", "predict_k", "resize_fve",
    "save_checkpoint", "tiny_config",
]
