"""Vibrational spectra from trajectory time series.

An infrared spectrum is the Fourier transform of the time
autocorrelation of the dipole derivative; Raman uses the rotational
invariants of the polarizability derivative (isotropic mean and
anisotropic traceless part). Component autocorrelations are summed
before the transform, which makes every spectrum exactly invariant
under a rigid rotation of the recorded frames.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .units import CM1_PER_INV_FS, HC_OVER_KB_CM_K


@dataclass
class Spectrum:
    frequencies: np.ndarray  # cm^-1, ascending, uniformly spaced
    intensities: np.ndarray
    metadata: dict
    channels: dict = None


def _next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


def autocorrelation(signal, depth, normalization="biased"):
    """Lagged products of a real series for lags 0..depth-1.

    Computed by FFT periodogram (zero-padded, so no circular wrap) and
    identical to the direct double loop. biased divides every lag by N,
    unbiased by the number of contributing products N-lag.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigurationError("autocorrelation expects a 1-D series")
    n = x.size
    if depth < 1 or depth > n:
        raise ConfigurationError(
            f"autocorrelation depth {depth} outside [1, {n}]"
        )
    if normalization not in ("biased", "unbiased"):
        raise ConfigurationError("normalization must be 'biased' or 'unbiased'")
    nfft = _next_pow2(2 * n)
    spectrum = np.fft.rfft(x, nfft)
    raw = np.fft.irfft(spectrum * np.conj(spectrum), nfft)[:depth]
    if normalization == "biased":
        return raw / n
    return raw / (n - np.arange(depth))


def finite_difference_derivative(series, dt):
    """Time derivative: central interior, one-sided first-order ends."""
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] < 3:
        raise ConfigurationError("derivative needs at least 3 samples")
    return np.gradient(x, dt, axis=0, edge_order=1)


def hann_window(n):
    """Cosine taper, exactly 0 at both ends and 1 in the center."""
    return np.hanning(n)


def spectral_depth(sample_interval, span_fs=2048.0):
    """Autocorrelation depth in samples covering span_fs of lag time."""
    return int(round(span_fs / sample_interval))


def _power_spectrum(series_list, dt, depth, window, zero_padding, normalization):
    """|FT| of the windowed, zero-padded sum of autocorrelations.

    Summing the component autocorrelations first keeps the result a
    rotational invariant (the trace of the correlation matrix).
    """
    ac = sum(autocorrelation(s, depth, normalization) for s in series_list)
    taper = hann_window(depth) if window else np.ones(depth)
    windowed = ac * taper
    nfft = _next_pow2(depth) * int(zero_padding)
    intensities = np.abs(np.fft.rfft(windowed, nfft))
    frequencies = np.fft.rfftfreq(nfft, d=dt) * CM1_PER_INV_FS
    return frequencies, intensities, windowed, nfft


def _resolve_depth(depth, n_samples, dt):
    if depth is None:
        depth = min(n_samples, spectral_depth(dt))
    return depth


def ir_spectrum(
    dipoles,
    dt,
    depth=None,
    window=True,
    zero_padding=4,
    normalization="biased",
):
    """Infrared spectrum from a dipole trajectory sampled every dt fs.

    The default depth covers 2048 fs of lag, capped at the series
    length. Frequencies are in cm^-1.
    """
    mu = np.asarray(dipoles, dtype=np.float64)
    if mu.ndim != 2 or mu.shape[1] != 3:
        raise ConfigurationError("dipole trajectory must have shape (T, 3)")
    depth = _resolve_depth(depth, mu.shape[0], dt)
    rate = finite_difference_derivative(mu, dt)
    frequencies, intensities, _, nfft = _power_spectrum(
        [rate[:, c] for c in range(3)], dt, depth, window, zero_padding, normalization
    )
    return Spectrum(
        frequencies,
        intensities,
        {
            "kind": "ir",
            "dt": dt,
            "depth": depth,
            "window": "hann" if window else "none",
            "nfft": nfft,
            "normalization": normalization,
        },
    )


def raman_spectrum(
    alphas,
    dt,
    depth=None,
    window=True,
    zero_padding=4,
    normalization="biased",
    laser_wavelength=514.0,
    temperature=300.0,
    prefactor=False,
):
    """Raman spectrum split into isotropic and anisotropic channels.

    The isotropic channel transforms the autocorrelation of the mean
    polarizability derivative; the anisotropic channel transforms
    3/2 times the summed autocorrelations of the traceless part. The
    primary intensities are their sum. With prefactor=True both channels
    are scaled by the harmonic cross-section factor
    (nu_laser - nu)^4 / nu * 1/(1 - exp(-h c nu / kB T)), zeroed at the
    static bin.
    """
    alpha = np.asarray(alphas, dtype=np.float64)
    if alpha.ndim != 3 or alpha.shape[1:] != (3, 3):
        raise ConfigurationError("polarizability trajectory must be (T, 3, 3)")
    asym = np.abs(alpha - np.transpose(alpha, (0, 2, 1))).max()
    if asym > 1e-8:
        raise DataError(f"polarizability frames asymmetric by {asym:.3e}")
    depth = _resolve_depth(depth, alpha.shape[0], dt)
    rate = finite_difference_derivative(alpha, dt)
    mean_rate = np.trace(rate, axis1=1, axis2=2) / 3.0
    traceless = rate - mean_rate[:, None, None] * np.eye(3)

    frequencies, iso, _, nfft = _power_spectrum(
        [mean_rate], dt, depth, window, zero_padding, normalization
    )
    _, aniso_raw, _, _ = _power_spectrum(
        [traceless[:, i, j] for i in range(3) for j in range(3)],
        dt,
        depth,
        window,
        zero_padding,
        normalization,
    )
    aniso = 1.5 * aniso_raw

    if prefactor:
        laser_cm1 = 1e7 / laser_wavelength
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = (laser_cm1 - frequencies) ** 4 / frequencies
            factor /= 1.0 - np.exp(-HC_OVER_KB_CM_K * frequencies / temperature)
        factor[0] = 0.0
        iso = iso * factor
        aniso = aniso * factor

    return Spectrum(
        frequencies,
        iso + aniso,
        {
            "kind": "raman",
            "dt": dt,
            "depth": depth,
            "window": "hann" if window else "none",
            "nfft": nfft,
            "normalization": normalization,
            "laser_wavelength_nm": laser_wavelength,
            "temperature_K": temperature,
            "prefactor": bool(prefactor),
        },
        channels={"isotropic": iso, "anisotropic": aniso},
    )


def write_spectrum(path, spectrum, channel=None):
    """Two-column CSV (cm^-1, intensity) plus a JSON metadata sidecar."""
    values = (
        spectrum.intensities if channel is None else spectrum.channels[channel]
    )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frequency_cm1", "intensity"])
        for f, i in zip(spectrum.frequencies, values):
            writer.writerow([format(f, ".17g"), format(i, ".17g")])
    meta = dict(spectrum.metadata)
    if channel is not None:
        meta["channel"] = channel
    with open(f"{path}.json", "w") as handle:
        json.dump(meta, handle, indent=2)
        handle.write("\n")
