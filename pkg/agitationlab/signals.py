"""
Raw wrist-sensor streams -> filtered 64 Hz streams -> non-overlapping 1-minute windows.

Signal file (UTF-8 text, one file per participant-day):

    participant_id,<id>
    day,<ISO date>
    start_minute,<minutes after midnight>
    channel,<name>,<sample rate in Hz>
    <one sample per line>
    channel,<name>,<sample rate in Hz>
    ...
"""

import io
import logging
from datetime import date
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, lfilter_zi

from agitationlab.models import CHANNELS, Channel, SignalFrame
from agitationlab.models.frame import SignalError
from agitationlab.utils import FLOAT_FORMAT, atomic_write_text, round_half_up

logger = logging.getLogger(__name__)

TARGET_RATE_HZ = 64
WINDOW_SECONDS = 60
WINDOW_SAMPLES = TARGET_RATE_HZ * WINDOW_SECONDS
DEFAULT_CUTOFF_HZ = 10.0


def resample_to_64hz(channel_samples, rate: float) -> np.ndarray:
    """Linear interpolation onto a 64 Hz grid; a 64 Hz input is returned unchanged"""
    samples = np.asarray(channel_samples, dtype=float)
    if samples.size == 0:
        raise SignalError("Cannot resample an empty channel")
    if not rate > 0:
        raise SignalError(f"Sample rate must be positive, got {rate}")
    if rate == TARGET_RATE_HZ:
        return samples.copy()
    n_out = round_half_up(samples.size * TARGET_RATE_HZ / rate)
    t_in = np.arange(samples.size) / rate
    t_out = np.arange(n_out) / TARGET_RATE_HZ
    return np.interp(t_out, t_in, samples)


def lowpass_first_order(samples, cutoff_hz: float, rate: float) -> np.ndarray:
    """
    First-order Butterworth low-pass (bilinear transform, pre-warped at the cutoff).

    The filter state starts at the first sample's steady state, so a constant
    input passes through unchanged.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise SignalError("Cannot filter an empty channel")
    if not 0 < cutoff_hz < rate / 2:
        raise SignalError(f"Cutoff {cutoff_hz} Hz must lie in (0, {rate / 2}) for a {rate} Hz signal")
    b, a = butter(1, cutoff_hz, btype='low', fs=rate)
    filtered, _ = lfilter(b, a, samples, zi=lfilter_zi(b, a) * samples[0])
    return filtered


def preprocess_channel(channel: Channel, cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> np.ndarray:
    """Filter and bring one channel to 64 Hz; filtering happens at the higher of the two rates"""
    if channel.sample_rate_hz > TARGET_RATE_HZ:
        filtered = lowpass_first_order(channel.samples, cutoff_hz, channel.sample_rate_hz)
        return resample_to_64hz(filtered, channel.sample_rate_hz)
    resampled = resample_to_64hz(channel.samples, channel.sample_rate_hz)
    return lowpass_first_order(resampled, cutoff_hz, TARGET_RATE_HZ)


def preprocess_frame(frame: SignalFrame, cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> SignalFrame:
    channels = {
        name: Channel(TARGET_RATE_HZ, preprocess_channel(frame.channels[name], cutoff_hz))
        for name in CHANNELS
    }
    return SignalFrame(frame.participant_id, frame.day, channels, frame.start_minute)


def _require_64hz(frame: SignalFrame):
    rates = {name: frame.channels[name].sample_rate_hz for name in CHANNELS}
    if any(rate != TARGET_RATE_HZ for rate in rates.values()):
        raise SignalError(f"Windowing needs every channel at {TARGET_RATE_HZ} Hz, got {rates}")


def window_count(frame: SignalFrame) -> int:
    _require_64hz(frame)
    return min(frame.channels[name].samples.size for name in CHANNELS) // WINDOW_SAMPLES


def window_1min(frame: SignalFrame):
    """
    Chronological, disjoint 3840-sample windows per channel; the trailing partial minute is dropped.

    Returns:
        list: one dict of channel name -> sample slice per window
    """
    n_windows = window_count(frame)
    return [
        {name: frame.channels[name].samples[w * WINDOW_SAMPLES:(w + 1) * WINDOW_SAMPLES] for name in CHANNELS}
        for w in range(n_windows)
    ]


def window_matrix(frame: SignalFrame):
    """Same windows as window_1min, as one (n_windows, 3840) array per channel"""
    n_windows = window_count(frame)
    return {
        name: frame.channels[name].samples[:n_windows * WINDOW_SAMPLES].reshape(n_windows, WINDOW_SAMPLES)
        for name in CHANNELS
    }


# ---------------------------------------------------------------------------
# Signal files
# ---------------------------------------------------------------------------

def signal_file_name(participant_id: str, day: date) -> str:
    return f"{participant_id}_{day.isoformat()}.signal.txt"


def save_signal_frame(frame: SignalFrame, directory) -> Path:
    buffer = io.StringIO()
    buffer.write(f"participant_id,{frame.participant_id}\n")
    buffer.write(f"day,{frame.day.isoformat()}\n")
    buffer.write(f"start_minute,{frame.start_minute}\n")
    for name in CHANNELS:
        channel = frame.channels[name]
        buffer.write(f"channel,{name},{channel.sample_rate_hz:g}\n")
        np.savetxt(buffer, channel.samples, fmt=FLOAT_FORMAT)
    path = Path(directory) / signal_file_name(frame.participant_id, frame.day)
    try:
        atomic_write_text(path, buffer.getvalue())
    except OSError as e:
        raise SignalError(f"Cannot write signal file {path}: {e}")
    return path


def load_signal_frame(path) -> SignalFrame:
    path = Path(path)
    if not path.exists():
        raise SignalError(f"Signal file not found: {path}")
    lines = path.read_text(encoding='utf-8').splitlines()
    header = {}
    for line in lines[:3]:
        key, _, value = line.partition(',')
        header[key] = value
    missing = {'participant_id', 'day', 'start_minute'} - set(header)
    if missing:
        raise SignalError(f"{path}: header is missing {sorted(missing)}")

    blocks = [i for i, line in enumerate(lines) if line.startswith('channel,')]
    if not blocks:
        raise SignalError(f"{path}: no channel blocks")
    channels = {}
    for start, stop in zip(blocks, blocks[1:] + [len(lines)]):
        parts = lines[start].split(',')
        if len(parts) != 3:
            raise SignalError(f"{path}: line {start + 1}: malformed channel header '{lines[start]}'")
        _, name, rate = parts
        try:
            samples = np.asarray(lines[start + 1:stop], dtype=float)
            channels[name] = Channel(float(rate), samples)
        except ValueError as e:
            raise SignalError(f"{path}: channel block starting at line {start + 1}: {e}")
    try:
        day = date.fromisoformat(header['day'])
        start_minute = int(header['start_minute'])
    except ValueError as e:
        raise SignalError(f"{path}: bad header value: {e}")
    return SignalFrame(header['participant_id'], day, channels, start_minute)
