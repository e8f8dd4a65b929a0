"""Rating-polarity clusters from review sentiment proportions.

Pipeline: sentiment triple -> triangle embedding -> [a, c, omega] features
-> DBSCAN clusters -> Dirichlet posteriors over each cluster's ratings.
"""

__version__ = "0.1.0"

from .sentiment import SentimentTriple, Lexicon, score_text, validate_triple, load_lexicon  # noqa: E402
from .geometry import TriangleEmbedding, SideLengths, embed, side_lengths  # noqa: E402
from .features import (FeatureRecord, FeatureVector, compute_features, feature_vector,  # noqa: E402
                       heron_area, beta_angle, gamma_height, omega)
from .cluster import DbscanParams, ClusterAssignment, dbscan, label_polarity, evaluate_against_ratings  # noqa: E402
from .inference import RatingCounts, conjugate_posterior, mcmc_sample, tail_probabilities  # noqa: E402

__all__ = [
    "SentimentTriple", "Lexicon", "score_text", "validate_triple", "load_lexicon",
    "TriangleEmbedding", "SideLengths", "embed", "side_lengths",
    "FeatureRecord", "FeatureVector", "compute_features", "feature_vector",
    "heron_area", "beta_angle", "gamma_height", "omega",
    "DbscanParams", "ClusterAssignment", "dbscan", "label_polarity", "evaluate_against_ratings",
    "RatingCounts", "conjugate_posterior", "mcmc_sample", "tail_probabilities",
]
