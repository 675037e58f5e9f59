"""Audio front end: waveform ingestion and log-mel spectrogram extraction.

Defaults: 32 ms frames every 25 ms, 50 triangular mel filters spanning
60-3600 Hz, 512-point FFT, Hann window, natural log with a 1e-6 floor,
16 kHz mono audio.  All of it is configurable through :class:`MelConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from sklearn.base import BaseEstimator, TransformerMixin

__all__ = [
    "LogMelExtractor",
    "MelConfig",
    "MelSpectrogram",
    "Waveform",
    "fix_length",
    "frame_signal",
    "hz_to_mel",
    "load_waveform",
    "log_mel",
    "mel_filterbank",
    "mel_to_hz",
    "save_waveform",
]

DEFAULT_SAMPLE_RATE = 16_000


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a nonempty 1-d sample array")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        peak = float(np.max(np.abs(samples))) if samples.size else 0.0
        if peak > 1.0 + 1e-9:
            raise ValueError(f"samples must lie in [-1, 1], peak is {peak:.4f}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class MelConfig:
    """Log-mel extraction parameters."""

    frame_length_ms: float = 32.0
    frame_step_ms: float = 25.0
    num_bins: int = 50
    fmin_hz: float = 60.0
    fmax_hz: float = 3600.0
    fft_size: int = 512
    log_floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.frame_length_ms <= 0 or self.frame_step_ms <= 0:
            raise ValueError("frame length and step must be positive")
        if self.num_bins < 1:
            raise ValueError("num_bins must be >= 1")
        if not 0 <= self.fmin_hz < self.fmax_hz:
            raise ValueError("need 0 <= fmin_hz < fmax_hz")
        if self.fft_size < 1:
            raise ValueError("fft_size must be positive")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be a small positive real")

    def frame_length(self, sample_rate: int) -> int:
        return round(self.frame_length_ms * sample_rate / 1000.0)

    def frame_step(self, sample_rate: int) -> int:
        return round(self.frame_step_ms * sample_rate / 1000.0)

    def validate_for_rate(self, sample_rate: int) -> None:
        if self.fmax_hz > sample_rate / 2:
            raise ValueError(
                f"fmax_hz {self.fmax_hz} exceeds Nyquist for {sample_rate} Hz"
            )
        if self.fft_size < self.frame_length(sample_rate):
            raise ValueError(
                f"fft_size {self.fft_size} smaller than frame length "
                f"{self.frame_length(sample_rate)} samples"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MelConfig":
        return cls(**d)


@dataclass(frozen=True)
class MelSpectrogram:
    """A frames-by-bins matrix of log mel energies."""

    values: np.ndarray
    config: MelConfig

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("mel spectrogram must be 2-d (frames x bins)")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Waveform IO
# ---------------------------------------------------------------------------


def _to_float(samples: np.ndarray) -> np.ndarray:
    if samples.dtype == np.int16:
        return samples.astype(np.float64) / 32768.0
    if samples.dtype == np.int32:
        return samples.astype(np.float64) / 2147483648.0
    if samples.dtype == np.uint8:
        return (samples.astype(np.float64) - 128.0) / 128.0
    if samples.dtype in (np.float32, np.float64):
        return samples.astype(np.float64)
    raise ValueError(f"unsupported sample dtype {samples.dtype}")


def load_waveform(path: str | Path, target_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read a PCM wav file: average to mono, rescale to [-1, 1], resample.

    Resampling is linear interpolation onto the target rate's sample grid.
    """
    rate, samples = wavfile.read(str(path))
    samples = _to_float(np.asarray(samples))
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    np.clip(samples, -1.0, 1.0, out=samples)
    if rate != target_rate:
        n_out = max(1, round(samples.size * target_rate / rate))
        x_old = np.arange(samples.size) / rate
        x_new = np.arange(n_out) / target_rate
        samples = np.interp(x_new, x_old, samples)
    return Waveform(samples=samples, sample_rate_hz=target_rate)


def save_waveform(waveform: Waveform, path: str | Path) -> Path:
    """Write a waveform as 16-bit PCM."""
    path = Path(path)
    pcm = np.clip(waveform.samples, -1.0, 1.0)
    wavfile.write(str(path), waveform.sample_rate_hz, (pcm * 32767.0).astype(np.int16))
    return path


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------


def frame_signal(waveform: Waveform, config: MelConfig) -> np.ndarray:
    """Slice a waveform into overlapping frames.

    Frame ``i`` covers samples ``[i*H, i*H + L)``; the trailing remainder
    shorter than a frame is dropped, so the count is
    ``floor((N - L) / H) + 1``.
    """
    sr = waveform.sample_rate_hz
    length = config.frame_length(sr)
    step = config.frame_step(sr)
    n = waveform.samples.size
    if n < length:
        raise ValueError(
            f"waveform has {n} samples, shorter than one {length}-sample frame"
        )
    count = (n - length) // step + 1
    idx = step * np.arange(count)[:, None] + np.arange(length)[None, :]
    return waveform.samples[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: MelConfig, sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filterbank, shape ``[num_bins, fft_size // 2 + 1]``.

    Corner frequencies are ``num_bins + 2`` points equally spaced on the
    mel scale between ``fmin_hz`` and ``fmax_hz``; each filter rises and
    falls linearly in Hz between consecutive corners, peaking at 1.
    """
    config.validate_for_rate(sample_rate)
    n_fft_bins = config.fft_size // 2 + 1
    bin_freqs = np.arange(n_fft_bins) * sample_rate / config.fft_size

    mels = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.num_bins + 2)
    corners = mel_to_hz(mels)

    weights = np.zeros((config.num_bins, n_fft_bins))
    for k in range(config.num_bins):
        left, peak, right = corners[k], corners[k + 1], corners[k + 2]
        rising = (bin_freqs - left) / (peak - left)
        falling = (right - bin_freqs) / (right - peak)
        weights[k] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def filter_peak_freqs(config: MelConfig) -> np.ndarray:
    """Peak frequency (Hz) of each mel filter."""
    mels = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.num_bins + 2)
    return mel_to_hz(mels[1:-1])


def log_mel(waveform: Waveform, config: MelConfig) -> MelSpectrogram:
    """Waveform to log mel spectrogram.

    Per frame: Hann window, magnitude-squared spectrum from a zero-padded
    FFT of ``fft_size``, mel filterbank product, then natural log of
    ``energy + log_floor``.
    """
    config.validate_for_rate(waveform.sample_rate_hz)
    frames = frame_signal(waveform, config)
    window = np.hanning(frames.shape[1])
    spectrum = np.fft.rfft(frames * window, n=config.fft_size, axis=1)
    power = np.abs(spectrum) ** 2
    fbank = mel_filterbank(config, waveform.sample_rate_hz)
    energies = power @ fbank.T
    return MelSpectrogram(values=np.log(energies + config.log_floor), config=config)


def fix_length(mel: MelSpectrogram, target_frames: int) -> MelSpectrogram:
    """Center-crop or symmetrically pad a spectrogram to a frame count.

    Padding rows take the silence value ``log(log_floor)``; odd crop or pad
    amounts put the extra row at the end.
    """
    if target_frames < 1:
        raise ValueError("target_frames must be >= 1")
    values = mel.values
    n = values.shape[0]
    if n > target_frames:
        lead = (n - target_frames) // 2
        values = values[lead : lead + target_frames]
    elif n < target_frames:
        pad = target_frames - n
        top = pad // 2
        fill = np.full((1, values.shape[1]), np.log(mel.config.log_floor))
        values = np.concatenate(
            [np.repeat(fill, top, axis=0), values, np.repeat(fill, pad - top, axis=0)]
        )
    return MelSpectrogram(values=values, config=mel.config)


class LogMelExtractor(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer from waveforms to fixed-size log-mel arrays.

    ``transform`` accepts a sequence of :class:`Waveform` and returns an
    array ``[n, target_frames, num_bins]``.  With ``normalize=True``,
    ``fit`` computes per-bin mean/std over the training waveforms and
    ``transform`` z-normalizes with those statistics.
    """

    def __init__(
        self,
        frame_length_ms: float = 32.0,
        frame_step_ms: float = 25.0,
        num_bins: int = 50,
        fmin_hz: float = 60.0,
        fmax_hz: float = 3600.0,
        fft_size: int = 512,
        log_floor: float = 1e-6,
        target_frames: int = 39,
        normalize: bool = False,
    ) -> None:
        self.frame_length_ms = frame_length_ms
        self.frame_step_ms = frame_step_ms
        self.num_bins = num_bins
        self.fmin_hz = fmin_hz
        self.fmax_hz = fmax_hz
        self.fft_size = fft_size
        self.log_floor = log_floor
        self.target_frames = target_frames
        self.normalize = normalize

    def mel_config(self) -> MelConfig:
        return MelConfig(
            frame_length_ms=self.frame_length_ms,
            frame_step_ms=self.frame_step_ms,
            num_bins=self.num_bins,
            fmin_hz=self.fmin_hz,
            fmax_hz=self.fmax_hz,
            fft_size=self.fft_size,
            log_floor=self.log_floor,
        )

    def _features(self, waveforms) -> np.ndarray:
        config = self.mel_config()
        feats = [
            fix_length(log_mel(w, config), self.target_frames).values for w in waveforms
        ]
        return np.stack(feats) if feats else np.empty((0, self.target_frames, self.num_bins))

    def fit(self, X, y=None) -> "LogMelExtractor":
        if self.normalize:
            feats = self._features(X)
            flat = feats.reshape(-1, self.num_bins)
            self.mean_ = flat.mean(axis=0)
            self.std_ = np.maximum(flat.std(axis=0), 1e-8)
        else:
            self.mean_ = None
            self.std_ = None
        return self

    def transform(self, X) -> np.ndarray:
        feats = self._features(X)
        if self.normalize:
            if getattr(self, "mean_", None) is None:
                raise RuntimeError("normalize=True requires fit() before transform()")
            feats = (feats - self.mean_) / self.std_
        return feats
