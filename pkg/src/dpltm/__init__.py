"""Deep partially linear transformation models for right-censored survival data."""
__version__ = "0.1.0"

from .data import SurvivalDataset, read_csv, split, write_csv
from .error_family import ErrorModel
from .inference import DirectionConfig, InferenceReport, infer
from .metrics import EvalReport, c_index, evaluate, ici, relative_error_g, wise_h
from .model import (DpltmParams, load_model, loglik, loglik_grad, predict_event_prob,
                    predict_survival, save_model)
from .net import DeepNet
from .simulator import SimDesign, calibrate_c0, simulate
from .spline import MonotoneSpline, SplineBasis, build_basis
from .trainer import FitResult, TrainConfig, fit, grid_search, select_error_model

__all__ = [
    "SurvivalDataset", "read_csv", "split", "write_csv", "ErrorModel", "DirectionConfig",
    "InferenceReport", "infer", "EvalReport", "c_index", "evaluate", "ici", "relative_error_g",
    "wise_h", "DpltmParams", "load_model", "loglik", "loglik_grad", "predict_event_prob",
    "predict_survival", "save_model", "DeepNet", "SimDesign", "calibrate_c0", "simulate",
    "MonotoneSpline", "SplineBasis", "build_basis", "FitResult", "TrainConfig", "fit",
    "grid_search", "select_error_model",
]
