"""MFCC acoustic front-end.

Fixed recipe, baked into the golden test fixtures:

- 16 kHz mono input, no resampling and no pre-emphasis
- 25 ms frames (400 samples) with a 10 ms shift (160 samples)
- Hamming window, 512-point FFT, one-sided power spectrum
- 26 triangular mel filters spanning 0-8000 Hz, peak 1, HTK mel scale
- natural log of filterbank energies floored at 1e-10
- orthonormal DCT-II, coefficients c0..c12 kept
"""

from __future__ import annotations

import numpy as np
import scipy.fft
import scipy.io.wavfile

SAMPLE_RATE = 16000
FRAME_LEN = 400
FRAME_SHIFT = 160
N_FFT = 512
N_FILTERS = 26
N_MFCC = 13
LOG_FLOOR = 1e-10

__all__ = [
    "SAMPLE_RATE",
    "FRAME_LEN",
    "FRAME_SHIFT",
    "N_FFT",
    "N_FILTERS",
    "N_MFCC",
    "load_wav",
    "save_wav",
    "frame_signal",
    "hamming_window",
    "mel",
    "mel_to_hz",
    "mel_filterbank_matrix",
    "compute_mfcc",
]


def load_wav(path) -> np.ndarray:
    """Load a 16 kHz mono 16-bit PCM WAV file as float64 in [-1, 1).

    Args:
        path : file path of the RIFF WAV file.

    Returns:
        1-D float64 signal.

    Raises:
        ValueError: wrong sample rate (no resampling is performed),
            more than one channel, or non-16-bit samples.
    """
    rate, data = scipy.io.wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz audio, got {rate} Hz")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    return data.astype(np.float64) / 32768.0


def save_wav(path, signal: np.ndarray) -> None:
    """Write a float signal in [-1, 1] as 16 kHz 16-bit PCM mono WAV."""
    pcm = np.clip(np.rint(np.asarray(signal) * 32767.0), -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(path, SAMPLE_RATE, pcm)


def hamming_window(length: int = FRAME_LEN) -> np.ndarray:
    """Symmetric Hamming window w[n] = 0.54 - 0.46 cos(2 pi n / (length-1))."""
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))


def frame_signal(pcm: np.ndarray) -> np.ndarray:
    """Slice a signal into 25 ms frames every 10 ms.

    For signals of at least one frame, T = floor((L - 400) / 160) + 1 and
    any tail shorter than a shift is dropped. Signals shorter than one
    frame yield a single zero-padded frame.

    Args:
        pcm : 1-D float signal at 16 kHz.

    Returns:
        (T, 400) float64 array of frames.

    Raises:
        ValueError: empty signal.
    """
    pcm = np.asarray(pcm, dtype=np.float64)
    if pcm.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {pcm.shape}")
    length = pcm.shape[0]
    if length == 0:
        raise ValueError("cannot frame an empty signal")
    if length < FRAME_LEN:
        frame = np.zeros((1, FRAME_LEN))
        frame[0, :length] = pcm
        return frame
    n_frames = (length - FRAME_LEN) // FRAME_SHIFT + 1
    starts = np.arange(n_frames) * FRAME_SHIFT
    return pcm[starts[:, None] + np.arange(FRAME_LEN)[None, :]]


def mel(freq_hz):
    """Hz to mel, HTK convention: 2595 * log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    """Inverse of :func:`mel`."""
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank_matrix(
    n_filters: int = N_FILTERS,
    n_fft: int = N_FFT,
    fmin: float = 0.0,
    fmax: float = 8000.0,
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """Triangular mel filterbank sampled at the FFT bin frequencies.

    Filter vertices are equally spaced on the mel scale between fmin and
    fmax. Triangles are un-normalized (peak 1 in continuous frequency).

    Returns:
        (n_filters, n_fft // 2 + 1) float64 weight matrix.

    Raises:
        ValueError: fmax above Nyquist.
    """
    nyquist = sample_rate / 2.0
    if fmax > nyquist:
        raise ValueError(f"fmax {fmax} Hz exceeds Nyquist {nyquist} Hz")
    if not (0.0 <= fmin < fmax):
        raise ValueError(f"need 0 <= fmin < fmax, got fmin={fmin} fmax={fmax}")
    vertices_hz = mel_to_hz(np.linspace(mel(fmin), mel(fmax), n_filters + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    weights = np.zeros((n_filters, n_fft // 2 + 1))
    for m in range(n_filters):
        lo, center, hi = vertices_hz[m], vertices_hz[m + 1], vertices_hz[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def filterbank_energies(pcm: np.ndarray) -> np.ndarray:
    """Per-frame mel filterbank energies (before the log), shape (T, 26)."""
    frames = frame_signal(pcm) * hamming_window()
    spectrum = np.fft.rfft(frames, n=N_FFT, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return power @ mel_filterbank_matrix().T


def compute_mfcc(pcm: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Extract the first 13 MFCCs per frame.

    Args:
        pcm : 1-D float signal.
        sample_rate : must be 16000; anything else is rejected rather
            than resampled.

    Returns:
        (T, 13) float64 coefficient matrix, c0 included.

    Raises:
        ValueError: empty signal or wrong sample rate.
    """
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate} Hz")
    log_energies = np.log(np.maximum(filterbank_energies(pcm), LOG_FLOOR))
    cepstra = scipy.fft.dct(log_energies, type=2, axis=1, norm="ortho")
    return cepstra[:, :N_MFCC]
