"""Bias-corrected joint spectral embedding for multilayer networks."""
from .embed import BcjseConfig, Embedding, base, bcjse, gram_sum, hetero_pca, mase, recommend_rs, sos
from .infer import clustering_error, kmeans_rows, membership_test, plugin_estimates
from .linalg import align, hollow, matrix_sign, top_d_eigs, two_to_infty
from .model import CosieModel, LayerStack, build_mlsbm, build_sim41, build_sim42, sample_layers
from .rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "BcjseConfig", "Embedding", "base", "bcjse", "gram_sum", "hetero_pca", "mase", "recommend_rs",
    "sos", "clustering_error", "kmeans_rows", "membership_test", "plugin_estimates", "align",
    "hollow", "matrix_sign", "top_d_eigs", "two_to_infty", "CosieModel", "LayerStack",
    "build_mlsbm", "build_sim41", "build_sim42", "sample_layers", "RngStream", "__version__",
]
