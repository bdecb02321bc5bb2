"""Synthetic multivariate time-series benchmarks with known discriminative
regions, lightweight classifiers, saliency explainers (ridge coefficients,
segment kernel SHAP, dCAM, random) and their evaluation against ground truth
and by perturbation.
"""

__version__ = "0.1.0"

from .errors import DataError, MtsxError, NumericError  # noqa: E402
from .tsdata import GroundTruthMask, LabeledDataset, SaliencyMap, Scale  # noqa: E402

__all__ = ["DataError", "GroundTruthMask", "LabeledDataset", "MtsxError", "NumericError",
           "SaliencyMap", "Scale", "__version__"]
