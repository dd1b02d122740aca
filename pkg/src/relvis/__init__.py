"""Two-view latent factorization for visualizations relevant to a user."""
from .data import (DataError, FeatureMatrix, LabelSet, SyntheticSpec, gaussian_similarity,
                   labels_to_counts, load_counts, load_features, load_labels, median_sigma,
                   normalize, synth_generate, synth_two_aspects)
from .evaluation import KnnReport, loo_knn_accuracy, separability_report, sne_baseline
from .model import (CountMatrix, LatentState, ModelConfig, PairDistribution, cost,
                    gradient, model_distribution, shared_coordinates,
                    view_specific_coordinates, weighted_sq_distance)
from .optim import (FitReport, OptimConfig, OptimizationError, finite_diff_gradient, fit,
                    init_state)

__version__ = "0.1.0"
