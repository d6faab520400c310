"""Image-level hyperspectral classification with per-band descriptors and band voting."""

from .classify import BandEnsemble, LinearSvm, SvmTrainConfig, majority_vote, predict_band, train_band_ensemble, train_svm
from .colorimetry import SpectralResponse, default_response, hsi_to_rgb
from .cube_io import DatasetManifest, HyperspectralCube, SyntheticSpec, generate_synthetic, load_cube, write_cube
from .descriptors import HogConfig, LbpConfig, SiftConfig, extract_dsift, extract_hog, extract_lbp
from .encoding import EmConfig, GmmModel, fisher_encode, fit_gmm, l2_normalize
from .preprocess import PreprocessConfig, exclude_bands, median_filter_band, preprocess_cube, resize_band

__version__ = "0.1.0"
