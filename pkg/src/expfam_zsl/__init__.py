"""Zero-shot classification with attribute-gated exponential-family class models."""

from .dataset import (
    UNLABELED,
    AttributeTable,
    FeatureTable,
    SplitView,
    load_attributes,
    load_features,
    make_split,
    save_attributes,
    save_features,
    validation_split,
)
from .expfam import BernoulliProduct, FamilySpec, GaussianDiag, estimate, log_density
from .fewshot import FewShotStats, accumulate, apply_fewshot, fewshot_update
from .model import (
    GfzslConfig,
    GfzslModel,
    classify,
    classify_batch,
    classify_generalized,
    fit,
    load_model,
    predict_params,
    save_model,
    score,
)
from .regression import KernelSpec
from .synthgen import SynthConfig, generate
from .transductive import EmConfig, run_em

__version__ = "0.1.0"

__all__ = [
    "UNLABELED",
    "AttributeTable",
    "FeatureTable",
    "SplitView",
    "load_attributes",
    "load_features",
    "make_split",
    "save_attributes",
    "save_features",
    "validation_split",
    "GfzslConfig",
    "GfzslModel",
    "classify",
    "classify_batch",
    "classify_generalized",
    "fit",
    "load_model",
    "predict_params",
    "save_model",
    "score",
    "BernoulliProduct",
    "FamilySpec",
    "GaussianDiag",
    "estimate",
    "log_density",
    "FewShotStats",
    "accumulate",
    "apply_fewshot",
    "fewshot_update",
    "KernelSpec",
    "SynthConfig",
    "generate",
    "EmConfig",
    "run_em",
]
