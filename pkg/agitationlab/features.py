"""
The 67-feature catalog computed over each 1-minute window.

Seven streams (the six channels plus acceleration magnitude) get eight moment
features each; acceleration magnitude, BVP and EDA get spectral energy and
dominant frequency; five stream-specific descriptors complete the set.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.signal import find_peaks

from agitationlab.errors import DataError
from agitationlab.models import CHANNELS, FEATURE_COUNT, LabeledDataset, SignalFrame, episode_membership
from agitationlab.models.dataset import NO_CATEGORY
from agitationlab.signals import DEFAULT_CUTOFF_HZ, TARGET_RATE_HZ, WINDOW_SAMPLES, preprocess_frame, window_matrix

logger = logging.getLogger(__name__)

STREAMS = CHANNELS + ('acc_mag',)
MOMENTS = ('mean', 'std', 'min', 'max', 'range', 'rms', 'skewness', 'kurtosis')
SPECTRAL_STREAMS = ('acc_mag', 'bvp', 'eda')
EXTRAS = ('eda_slope', 'temp_slope', 'acc_mag_zero_crossings', 'bvp_band_power', 'eda_peak_count')

# Heart-rate band used for BVP band power (42-210 beats per minute)
BVP_BAND_HZ = (0.7, 3.5)
EDA_PEAK_PROMINENCE = 0.05


class FeatureError(DataError):
    """Invalid window passed to feature extraction"""
    pass


@dataclass(frozen=True)
class FeatureCatalog:
    """Ordered, versioned list of feature names; the order is the column order of every dataset"""
    names: tuple
    version: int = 1

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, 'names', names)
        if len(names) != FEATURE_COUNT:
            raise FeatureError(f"Feature catalog must list {FEATURE_COUNT} features, got {len(names)}")
        if len(set(names)) != len(names):
            raise FeatureError("Feature catalog names must be unique")
        unknown = set(names) - set(_all_feature_names())
        if unknown:
            raise FeatureError(f"Unknown features in catalog: {sorted(unknown)}")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def _all_feature_names():
    names = [f"{stream}_{moment}" for stream in STREAMS for moment in MOMENTS]
    names += [f"{stream}_{kind}" for stream in SPECTRAL_STREAMS for kind in ('spectral_energy', 'dominant_freq')]
    names += list(EXTRAS)
    return names


DEFAULT_CATALOG = FeatureCatalog(tuple(_all_feature_names()), version=1)


def _moments(x, out, stream):
    mean = x.mean(axis=1)
    std = x.std(axis=1)
    flat = std == 0
    with warnings.catch_warnings(), np.errstate(all='ignore'):
        warnings.simplefilter('ignore', RuntimeWarning)
        skew = stats.skew(x, axis=1, bias=True)
        kurt = stats.kurtosis(x, axis=1, fisher=True, bias=True)
    out[f"{stream}_mean"] = mean
    out[f"{stream}_std"] = std
    out[f"{stream}_min"] = x.min(axis=1)
    out[f"{stream}_max"] = x.max(axis=1)
    out[f"{stream}_range"] = out[f"{stream}_max"] - out[f"{stream}_min"]
    out[f"{stream}_rms"] = np.sqrt(np.mean(x * x, axis=1))
    out[f"{stream}_skewness"] = np.where(flat, 0.0, skew)
    out[f"{stream}_kurtosis"] = np.where(flat, 0.0, kurt)


def _power_spectrum(x):
    centered = x - x.mean(axis=1, keepdims=True)
    spectrum = np.fft.rfft(centered, axis=1)
    freqs = np.fft.rfftfreq(x.shape[1], d=1.0 / TARGET_RATE_HZ)
    return np.abs(spectrum) ** 2 / x.shape[1], freqs


def _spectral(x, out, stream):
    power, freqs = _power_spectrum(x)
    energy = power[:, 1:].sum(axis=1)
    dominant = freqs[1:][np.argmax(power[:, 1:], axis=1)]
    out[f"{stream}_spectral_energy"] = energy
    out[f"{stream}_dominant_freq"] = np.where(energy > 0, dominant, 0.0)


def _slope(x):
    """Least-squares slope per second"""
    t = np.arange(x.shape[1]) / TARGET_RATE_HZ
    t = t - t.mean()
    return (x - x.mean(axis=1, keepdims=True)) @ t / np.dot(t, t)


def extract_feature_matrix(windows: dict, catalog: FeatureCatalog = DEFAULT_CATALOG) -> np.ndarray:
    """
    Features for a batch of windows.

    Args:
        windows: channel name -> (n_windows, 3840) array
        catalog: column order of the result

    Returns:
        np.ndarray: (n_windows, 67) feature matrix
    """
    missing = set(CHANNELS) - set(windows)
    if missing:
        raise FeatureError(f"Window is missing channels {sorted(missing)}")
    streams = {}
    for name in CHANNELS:
        x = np.atleast_2d(np.asarray(windows[name], dtype=float))
        if x.shape[1] != WINDOW_SAMPLES:
            raise FeatureError(f"Channel {name} windows must have {WINDOW_SAMPLES} samples, got {x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise FeatureError(f"Channel {name} contains non-finite samples")
        streams[name] = x
    streams['acc_mag'] = np.sqrt(streams['acc_x'] ** 2 + streams['acc_y'] ** 2 + streams['acc_z'] ** 2)

    out = {}
    for stream in STREAMS:
        _moments(streams[stream], out, stream)
    for stream in SPECTRAL_STREAMS:
        _spectral(streams[stream], out, stream)

    out['eda_slope'] = _slope(streams['eda'])
    out['temp_slope'] = _slope(streams['temp'])
    centered = streams['acc_mag'] - streams['acc_mag'].mean(axis=1, keepdims=True)
    out['acc_mag_zero_crossings'] = np.count_nonzero(centered[:, :-1] * centered[:, 1:] < 0, axis=1).astype(float)
    power, freqs = _power_spectrum(streams['bvp'])
    band = (freqs >= BVP_BAND_HZ[0]) & (freqs <= BVP_BAND_HZ[1])
    out['bvp_band_power'] = power[:, band].sum(axis=1)
    out['eda_peak_count'] = np.array(
        [len(find_peaks(row, prominence=EDA_PEAK_PROMINENCE)[0]) for row in streams['eda']], dtype=float
    )

    matrix = np.column_stack([out[name] for name in catalog.names])
    if not np.all(np.isfinite(matrix)):
        raise FeatureError("Feature extraction produced non-finite values")
    return matrix


def extract_features(window_slices: dict, catalog: FeatureCatalog = DEFAULT_CATALOG) -> np.ndarray:
    """67 features of a single window given as channel name -> 3840 samples"""
    for name, samples in window_slices.items():
        if np.ndim(samples) != 1:
            raise FeatureError(f"Channel {name} slice must be one-dimensional")
    return extract_feature_matrix({name: np.asarray(s)[None, :] for name, s in window_slices.items()}, catalog)[0]


def frame_to_dataset(frame: SignalFrame, annotations=(), cutoff_hz: float = DEFAULT_CUTOFF_HZ,
                     catalog: FeatureCatalog = DEFAULT_CATALOG, categories=None) -> LabeledDataset:
    """
    Run the full processing chain on one participant-day.

    Args:
        frame: raw recording
        annotations: episodes used to label the windows (other days are ignored)
        cutoff_hz: low-pass cutoff
        catalog: feature order
        categories: optional per-window behaviour category (-1 for none)
    """
    processed = preprocess_frame(frame, cutoff_hz)
    windows = window_matrix(processed)
    n_windows = len(windows['acc_x'])
    if n_windows == 0:
        logger.warning(f"{frame.participant_id} {frame.day}: recording shorter than one minute, no windows")
        return LabeledDataset.empty()
    features = extract_feature_matrix(windows, catalog)
    episodes = tuple(a for a in annotations if a.key == frame.key)
    if categories is None:
        categories = np.full(n_windows, NO_CATEGORY)
    dataset = LabeledDataset(
        participant_ids=np.full(n_windows, frame.participant_id, dtype=object),
        days=np.full(n_windows, frame.day, dtype=object),
        minute_index=frame.start_minute + np.arange(n_windows),
        features=features,
        labels=np.zeros(n_windows, dtype=np.int8),
        categories=np.asarray(categories)[:n_windows],
        annotations=episodes,
    )
    return dataset.with_labels(episode_membership(dataset, episodes))
