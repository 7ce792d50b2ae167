"""Latent factor rating prediction with implicit feedback, user age and item genre attributes."""

from .dataio import DataError, Dataset, Split, load, load_ml1m, load_ml100k, random_split
from .model import (
    HyperParams,
    ModelParams,
    Prediction,
    SideInfo,
    Variant,
    cold_start_predict,
    load_model,
    predict,
    save_model,
)
from .train import DivergenceError, FitResult, fit

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "DivergenceError",
    "FitResult",
    "HyperParams",
    "ModelParams",
    "Prediction",
    "SideInfo",
    "Split",
    "Variant",
    "cold_start_predict",
    "fit",
    "load",
    "load_ml100k",
    "load_ml1m",
    "load_model",
    "predict",
    "random_split",
    "save_model",
]
