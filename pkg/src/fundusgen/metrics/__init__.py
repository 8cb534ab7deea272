from .evaluate import MetricReport, evaluate_dirs
from .features import FeatureMatrix, TestConvFeatures, extract_features, get_extractor
from .fid import fid
from .kid import kid, mmd2_unbiased_poly
from .ssim import gaussian_window, ssim

__all__ = [
    "MetricReport",
    "evaluate_dirs",
    "FeatureMatrix",
    "TestConvFeatures",
    "extract_features",
    "get_extractor",
    "fid",
    "kid",
    "mmd2_unbiased_poly",
    "gaussian_window",
    "ssim",
]
