"""
Simulated recirculating-loop fiber link.

Physical model per span::

    i dA/dZ = (beta2 / 2) d^2A/dT^2 - i (alpha / 2) A - gamma |A|^2 A

With ``A = sqrt(P0) psi``, ``T = T0 t``, ``Z = L0 z``, ``L0 = T0^2 / |beta2|``
and ``P0 = 1 / (gamma L0)`` this is the dimensionless focusing NLSE
``i psi_z + psi_tt / 2 + |psi|^2 psi = 0``.

Internal units are SI (s, m, W).  ``LinkConfig`` stores the customary units
(km, dB/km, ps^2/km, 1/(W km), GHz).
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import h as PLANCK, c as LIGHT

__all__ = [
    "Waveform",
    "LinkConfig",
    "ChannelError",
    "alpha_per_m",
    "gamma_effective",
    "ssfm_span",
    "propagate_dimensionless",
    "edfa",
    "obpf",
    "recirculate",
    "linear_broadening",
    "spectral_occupancy",
]


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    """
    Uniformly sampled complex baseband signal.

    ``units`` is ``"physical"`` (sqrt(W), sample_rate in Hz) or
    ``"dimensionless"`` (sample_rate in samples per unit time).
    """

    samples: np.ndarray
    sample_rate: float
    units: str = "physical"
    center_power_ref: float | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", x)
        if self.sample_rate <= 0:
            raise ChannelError("sample_rate must be positive")
        if x.ndim != 1 or len(x) == 0:
            raise ChannelError("waveform needs a non-empty 1-D sample vector")
        if self.units not in ("physical", "dimensionless"):
            raise ChannelError(f"unknown units {self.units!r}")

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    def __len__(self):
        return len(self.samples)

    def with_samples(self, x):
        return replace(self, samples=x)


@dataclass(frozen=True)
class LinkConfig:
    span_length: float = 75.0           # km
    spans_per_loop: int = 2
    alpha: float = 0.2                  # dB/km
    beta2: float = -18.9                # ps^2/km
    gamma: float = 1.3                  # 1/(W km)
    edfa_noise_figure: float = 5.0      # dB
    obpf_bandwidth: float = 50.0        # GHz
    loops: int = 15
    rng_seed: int = 1
    wavelength: float = 1550e-9         # m
    max_phase_step: float = 1e-3        # rad
    oversampling: int = 2               # channel samples per transmitter sample

    def __post_init__(self):
        for name in ("span_length", "alpha", "gamma", "obpf_bandwidth", "wavelength", "max_phase_step"):
            if not getattr(self, name) > 0:
                raise ChannelError(f"{name} must be positive")
        if not self.beta2 < 0:
            raise ChannelError("beta2 must be negative (anomalous dispersion)")
        if self.loops < 0 or self.spans_per_loop < 1 or self.oversampling < 1:
            raise ChannelError("loops >= 0, spans_per_loop >= 1 and oversampling >= 1 required")

    # SI views
    @property
    def beta2_si(self):
        return self.beta2 * 1e-27       # s^2/m

    @property
    def gamma_si(self):
        return self.gamma * 1e-3        # 1/(W m)

    @property
    def span_m(self):
        return self.span_length * 1e3

    @property
    def total_spans(self):
        return self.loops * self.spans_per_loop


def alpha_per_m(alpha_db_km):
    """Power attenuation coefficient in 1/m from dB/km."""
    return alpha_db_km * np.log(10) / 10 / 1e3


def gamma_effective(gamma, alpha, span_length):
    """
    Path-averaged nonlinearity ``gamma (1 - exp(-alpha L)) / (alpha L)``.

    ``alpha`` in dB/km, ``span_length`` in km; the result has the units of
    ``gamma``.
    """
    aL = alpha_per_m(alpha) * span_length * 1e3
    if aL == 0:
        return gamma
    return gamma * -np.expm1(-aL) / aL


def spectral_occupancy(x, fraction=0.99):
    """Fraction of the Nyquist band holding ``fraction`` of the energy."""
    P = np.abs(np.fft.fft(x)) ** 2
    f = np.abs(np.fft.fftfreq(len(x)))
    order = np.argsort(f)
    cum = np.cumsum(P[order]) / P.sum()
    idx = np.searchsorted(cum, fraction)
    return f[order][min(idx, len(x) - 1)] / 0.5


def _ssfm(x, dt, length, beta2, gamma, alpha, max_phase):
    """Symmetric split-step with the step bounded by the peak nonlinear phase."""
    w = 2 * np.pi * np.fft.fftfreq(len(x), d=dt)
    z = 0.0
    X = x.copy()
    while z < length:
        peak = np.max(np.abs(X)) ** 2
        h = length - z
        if gamma > 0 and peak > 0:
            h = min(h, max_phase / (gamma * peak))
        half = np.exp((0.5j * beta2 * w ** 2 - 0.5 * alpha) * (h / 2))
        X = np.fft.ifft(half * np.fft.fft(X))
        if gamma > 0:
            leff = h if alpha == 0 else -np.expm1(-alpha * h) / alpha
            # loss is applied in the linear half steps; the nonlinear step
            # sees the power at the step midpoint, integrated over the step
            leff = leff * np.exp(0.5 * alpha * h)
            X = X * np.exp(1j * gamma * np.abs(X) ** 2 * leff)
        X = np.fft.ifft(half * np.fft.fft(X))
        z += h
    return X


def ssfm_span(w: Waveform, cfg: LinkConfig, lossless: bool = False,
              length: float | None = None, check_alias: bool = True) -> Waveform:
    """
    Propagate through one span (or ``length`` km) of fiber.

    ``lossless`` drops attenuation and uses the path-averaged nonlinearity.
    """
    if w.units != "physical":
        raise ChannelError("ssfm_span works on physical waveforms")
    if check_alias:
        occ = spectral_occupancy(w.samples)
        if occ > 0.8:
            raise ChannelError(f"signal occupies {occ:.0%} of the Nyquist band (limit 80%)")
    L = (cfg.span_length if length is None else length) * 1e3
    if lossless:
        alpha = 0.0
        gamma = gamma_effective(cfg.gamma, cfg.alpha, cfg.span_length) * 1e-3
    else:
        alpha = alpha_per_m(cfg.alpha)
        gamma = cfg.gamma_si
    y = _ssfm(w.samples, w.dt, L, cfg.beta2_si, gamma, alpha, cfg.max_phase_step)
    return w.with_samples(y)


def propagate_dimensionless(x, dt, distance, max_phase=1e-3):
    """Lossless noiseless propagation under the dimensionless NLSE."""
    return _ssfm(np.asarray(x, dtype=complex), dt, distance, -1.0, 1.0, 0.0, max_phase)


def edfa(w: Waveform, gain_db, noise_figure_db, rng: np.random.Generator,
         wavelength=1550e-9) -> Waveform:
    """
    Lumped amplifier with additive white ASE in one polarization.

    The ASE power spectral density is ``n_sp (G - 1) h nu`` with
    ``n_sp (G - 1) = (F G - 1) / 2`` for noise figure F, so that F = 2
    (3 dB) gives ``(G - 1) h nu`` at high gain.
    """
    G = 10 ** (gain_db / 10)
    if G < 1:
        raise ChannelError("EDFA gain must be >= 1")
    F = 10 ** (noise_figure_db / 10)
    nu = LIGHT / wavelength
    psd = max(F * G - 1.0, 0.0) / 2.0 * PLANCK * nu
    var = psd * w.sample_rate
    x = np.sqrt(G) * w.samples
    if var > 0:
        n = rng.standard_normal(len(x)) + 1j * rng.standard_normal(len(x))
        x = x + np.sqrt(var / 2) * n
    return w.with_samples(x)


def obpf(w: Waveform, bandwidth) -> Waveform:
    """Ideal brick-wall band pass of total width ``bandwidth`` (Hz) at baseband."""
    if not 0 < bandwidth:
        raise ChannelError("filter bandwidth must be positive")
    if bandwidth >= w.sample_rate:
        return w
    f = np.fft.fftfreq(len(w), d=w.dt)
    X = np.fft.fft(w.samples)
    X[np.abs(f) > bandwidth / 2] = 0.0
    return w.with_samples(np.fft.ifft(X))


def recirculate(w: Waveform, cfg: LinkConfig, spans: int | None = None,
                lossless: bool = False, noise: bool = True) -> list:
    """
    Send ``w`` around the loop.

    Returns a list whose n-th entry is the waveform after n spans (entry 0 is
    the input).  Each span is fiber followed by an amplifier restoring the
    span loss; the band-pass filter sits at the end of every loop and is also
    applied to intermediate taps.

    Parameters
    ----------
    spans : int, optional
        Number of spans; defaults to ``loops * spans_per_loop``.
    lossless : bool
        Path-averaged lossless fiber (amplifier gain 0 dB).
    noise : bool
        Add ASE noise.
    """
    n_spans = cfg.total_spans if spans is None else spans
    rng = np.random.default_rng(cfg.rng_seed)
    gain_db = 0.0 if lossless else cfg.alpha * cfg.span_length
    bw = cfg.obpf_bandwidth * 1e9
    taps = [w]
    x = w
    for n in range(1, n_spans + 1):
        x = ssfm_span(x, cfg, lossless=lossless, check_alias=(n == 1))
        if noise:
            x = edfa(x, gain_db, cfg.edfa_noise_figure, rng, cfg.wavelength)
        else:
            x = x.with_samples(x.samples * 10 ** (gain_db / 20))
        if n % cfg.spans_per_loop == 0:
            x = obpf(x, bw)
            taps.append(x)
        else:
            taps.append(obpf(x, bw))
    return taps


def linear_broadening(beta2, distance, bandwidth):
    """Dispersive spread ``2 pi |beta2| L B``; SI units in and out."""
    if beta2 == 0 or distance < 0 or bandwidth < 0:
        raise ChannelError("need nonzero beta2 and non-negative distance and bandwidth")
    return 2 * np.pi * abs(beta2) * distance * bandwidth
