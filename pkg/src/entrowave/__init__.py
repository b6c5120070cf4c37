"""Entropy streams, Haar wavelet energy spectra and malware classifiers for executables."""
from .binformat import SectionInfo, extract_strings, parse_sections, section_entropy_streams
from .entropy import EntropyStream, chunk_entropy, entropy_stream
from .evaluation import (
    bonferroni,
    danger_map,
    likelihood_ratio_test,
    metrics_at_threshold,
    roc_curve,
)
from .features import FeatureDictionary, FeatureVector, build_dictionary, featurize
from .lasso import LassoModel, influential_features, predict, train_lasso
from .ssecs import SizeGroupModel, malware_sensitivity, size_group, ssecs_score, train_ssecs
from .wavelet import EnergySpectrum, WaveletDecomposition, dwt_haar, energy_spectrum, mra_approximation

__version__ = "0.1.0"
