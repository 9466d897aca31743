"""Predict ransomware C&C domains from zone diffs and forecast detection counts."""
from .classifier import LinearClassifier, TrainConfig, cross_validate, predict_proba, train
from .domain_feed import DomainName, diff_zone_files, parse_blacklist_feed, parse_zone_file
from .errors import RansomcastError
from .features import encode_domain, step1_features, step2_features

__version__ = "0.1.0"

__all__ = [
    "DomainName",
    "LinearClassifier",
    "RansomcastError",
    "TrainConfig",
    "cross_validate",
    "diff_zone_files",
    "encode_domain",
    "parse_blacklist_feed",
    "parse_zone_file",
    "predict_proba",
    "step1_features",
    "step2_features",
    "train",
]
