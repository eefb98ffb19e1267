"""Numpy inference engine for the ABCDWaveNet road-ponding segmentation network."""
from .complexity import ComplexityReport, model_complexity
from .config import ModelConfig
from .fog import FogParams, synthesize_fog, transmission
from .metrics import confusion, evaluate_dirs, f1, iou, miou, mpa
from .network import Model, build_model, forward, load_model, predict_mask, save_model
from .weights import WeightStore, load_weights, save_weights

__version__ = "0.1.0"
