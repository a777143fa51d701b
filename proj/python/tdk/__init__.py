"""Trojan input detection by noise perturbation and a prediction-confidence bound."""

from ._tdk import (
    CalibrationRecord,
    CallableOracle,
    DetectorConfig,
    EchoOracle,
    ExternalOracle,
    FingerprintMismatch,
    MlpModel,
    Oracle,
    OracleError,
    TdkError,
    calibrate,
    clopper_pearson,
    confidence_bound,
    detect,
    dynamic_sigma,
    generate_synthetic,
    profile,
    threshold_for_frr,
    train_mlp,
)

__all__ = [
    "CalibrationRecord",
    "CallableOracle",
    "DetectorConfig",
    "EchoOracle",
    "ExternalOracle",
    "FingerprintMismatch",
    "MlpModel",
    "Oracle",
    "OracleError",
    "TdkError",
    "calibrate",
    "clopper_pearson",
    "confidence_bound",
    "detect",
    "dynamic_sigma",
    "generate_synthetic",
    "profile",
    "threshold_for_frr",
    "train_mlp",
]
