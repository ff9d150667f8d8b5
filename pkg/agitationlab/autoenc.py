"""
Single-hidden-layer autoencoder used to score how typical a normal window is.

Inputs are standardized with statistics of the training normals; the network
(67 -> 64 -> 67) is trained with plain mini-batch SGD on squared reconstruction
error. A window's score is its mean absolute reconstruction error in the
standardized space.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPRegressor

from agitationlab.errors import DataError, NumericError
from agitationlab.models import FEATURE_COUNT
from agitationlab.utils import atomic_write_json

logger = logging.getLogger(__name__)

HIDDEN_DIM = 64
FORMAT_NAME = 'agitationlab-autoencoder'
FORMAT_VERSION = 1

ACTIVATIONS = {
    'identity': lambda x: x,
    'relu': lambda x: np.maximum(x, 0.0),
    'tanh': np.tanh,
    'logistic': expit,
}


class AutoencoderError(DataError):
    """Invalid autoencoder input, configuration or file"""
    pass


class AutoencoderDivergence(NumericError):
    """Training produced non-finite loss or weights"""
    pass


@dataclass(frozen=True)
class AeTrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    batch_size: int = 64
    seed: int = 0
    activation: str = 'identity'

    def __post_init__(self):
        if self.epochs < 1:
            raise AutoencoderError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise AutoencoderError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise AutoencoderError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.activation not in ACTIVATIONS:
            raise AutoencoderError(f"Unknown activation '{self.activation}' (choose from {sorted(ACTIVATIONS)})")


@dataclass(frozen=True, eq=False)
class AutoencoderModel:
    mean: np.ndarray
    scale: np.ndarray
    encoder_weights: np.ndarray
    encoder_bias: np.ndarray
    decoder_weights: np.ndarray
    decoder_bias: np.ndarray
    activation: str = 'identity'
    loss_curve: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for name in ('mean', 'scale', 'encoder_weights', 'encoder_bias', 'decoder_weights', 'decoder_bias'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        shapes = {
            'mean': (FEATURE_COUNT,),
            'scale': (FEATURE_COUNT,),
            'encoder_weights': (FEATURE_COUNT, HIDDEN_DIM),
            'encoder_bias': (HIDDEN_DIM,),
            'decoder_weights': (HIDDEN_DIM, FEATURE_COUNT),
            'decoder_bias': (FEATURE_COUNT,),
        }
        for name, shape in shapes.items():
            value = getattr(self, name)
            if value.shape != shape:
                raise AutoencoderError(f"{name} must have shape {shape}, got {value.shape}")
            if not np.all(np.isfinite(value)):
                raise AutoencoderDivergence(f"{name} contains non-finite values")
        if np.any(self.scale <= 0):
            raise AutoencoderError("Standardization scale must be positive")
        if self.activation not in ACTIVATIONS:
            raise AutoencoderError(f"Unknown activation '{self.activation}'")
        object.__setattr__(self, 'loss_curve', tuple(float(v) for v in self.loss_curve))

    def standardize(self, features):
        return (features - self.mean) / self.scale

    def reconstruct(self, standardized):
        hidden = ACTIVATIONS[self.activation](standardized @ self.encoder_weights + self.encoder_bias)
        return hidden @ self.decoder_weights + self.decoder_bias


def _as_matrix(features, what):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[None, :]
    if features.ndim != 2 or features.shape[1] != FEATURE_COUNT:
        raise AutoencoderError(f"{what} must have {FEATURE_COUNT} features, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise AutoencoderError(f"{what} contains non-finite values")
    return features


def train_autoencoder(normals, config: AeTrainConfig = AeTrainConfig()) -> AutoencoderModel:
    """
    Fit the autoencoder on normal feature vectors.

    Args:
        normals: (n, 67) feature matrix, n >= 64
        config: training settings

    Returns:
        AutoencoderModel: standardization plus trained weights

    Raises:
        AutoencoderError: too few or malformed vectors
        AutoencoderDivergence: loss or weights became non-finite
    """
    x = _as_matrix(normals, "Autoencoder training data")
    if len(x) < HIDDEN_DIM:
        raise AutoencoderError(f"Autoencoder needs at least {HIDDEN_DIM} training vectors, got {len(x)}")

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    z = (x - mean) / scale

    network = MLPRegressor(
        hidden_layer_sizes=(HIDDEN_DIM,),
        activation=config.activation,
        solver='sgd',
        alpha=0.0,
        batch_size=min(config.batch_size, len(z)),
        learning_rate='constant',
        learning_rate_init=config.learning_rate,
        momentum=0.0,
        nesterovs_momentum=False,
        max_iter=config.epochs,
        shuffle=True,
        random_state=config.seed,
        tol=0.0,
        n_iter_no_change=config.epochs + 1,
        early_stopping=False,
    )
    with warnings.catch_warnings(), np.errstate(over='ignore', invalid='ignore'):
        warnings.simplefilter('ignore', ConvergenceWarning)
        try:
            network.fit(z, z)
        except ValueError as e:
            raise AutoencoderDivergence(f"Autoencoder training diverged: {e}") from None

    losses = np.asarray(network.loss_curve_, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise AutoencoderDivergence(
            f"Autoencoder loss became non-finite at epoch {int(np.flatnonzero(~np.isfinite(losses))[0]) + 1}"
        )
    if len(losses) > 1 and losses[-1] >= losses[0]:
        logger.warning(f"Autoencoder loss did not decrease ({losses[0]:.4g} -> {losses[-1]:.4g})")
    logger.debug(f"Autoencoder trained on {len(z)} vectors, final loss {losses[-1]:.4g}")

    return AutoencoderModel(
        mean=mean,
        scale=scale,
        encoder_weights=network.coefs_[0],
        encoder_bias=network.intercepts_[0],
        decoder_weights=network.coefs_[1],
        decoder_bias=network.intercepts_[1],
        activation=config.activation,
        loss_curve=tuple(losses),
    )


def reconstruction_scores(model: AutoencoderModel, features) -> np.ndarray:
    """Mean absolute standardized reconstruction error of every row"""
    z = model.standardize(_as_matrix(features, "Scored features"))
    return np.mean(np.abs(z - model.reconstruct(z)), axis=1)


def reconstruction_score(model: AutoencoderModel, instance) -> float:
    instance = np.asarray(instance, dtype=float)
    if instance.shape != (FEATURE_COUNT,):
        raise AutoencoderError(f"Instance must have {FEATURE_COUNT} features, got shape {instance.shape}")
    return float(reconstruction_scores(model, instance)[0])


def training_mse(model: AutoencoderModel, features) -> float:
    """Mean squared reconstruction error in the standardized space"""
    z = model.standardize(_as_matrix(features, "Features"))
    return float(np.mean((z - model.reconstruct(z)) ** 2))


def save_autoencoder(model: AutoencoderModel, path):
    atomic_write_json(path, {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'input_dim': FEATURE_COUNT,
        'hidden_dim': HIDDEN_DIM,
        'activation': model.activation,
        'mean': model.mean,
        'scale': model.scale,
        'encoder_weights': model.encoder_weights,
        'encoder_bias': model.encoder_bias,
        'decoder_weights': model.decoder_weights,
        'decoder_bias': model.decoder_bias,
        'loss_curve': list(model.loss_curve),
    })


def load_autoencoder(path) -> AutoencoderModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise AutoencoderError(f"Cannot read autoencoder file {path}: {e}")
    if data.get('format') != FORMAT_NAME or data.get('version') != FORMAT_VERSION:
        raise AutoencoderError(f"{path} is not a version {FORMAT_VERSION} autoencoder file")
    return AutoencoderModel(
        mean=data['mean'],
        scale=data['scale'],
        encoder_weights=data['encoder_weights'],
        encoder_bias=data['encoder_bias'],
        decoder_weights=data['decoder_weights'],
        decoder_bias=data['decoder_bias'],
        activation=data['activation'],
        loss_curve=data.get('loss_curve', ()),
    )
