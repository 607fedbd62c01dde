"""Predictors producing placement heatmaps."""

from .base import Observation, Predictor, observe
from .predictors import (
    KINDS, ConstantPredictor, FilePredictor, FloorPredictor, OraclePredictor, PriorPredictor,
    TextBoxPredictor, WrongReceptaclePredictor,
    bbox_adapter, make_predictor, oracle_predict, parse_boxes, prior_predict,
)

__all__ = [
    "KINDS", "ConstantPredictor", "FilePredictor", "FloorPredictor", "Observation", "OraclePredictor",
    "Predictor", "PriorPredictor", "TextBoxPredictor", "WrongReceptaclePredictor", "bbox_adapter",
    "make_predictor", "observe", "oracle_predict", "parse_boxes", "prior_predict",
]
