"""
Receiver chain: synchronization, CFO removal, slicing, normalization,
forward PNFT and decisions in the nonlinear spectral domain.
"""

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.signal import resample

from .channel import Waveform
from .pnft_forward import SpectrumEstimate, auto_search_box, find_main_spectrum, reduce_spectrum

__all__ = [
    "RxError",
    "DecisionReport",
    "schmidl_cox_sync",
    "cfo_compensate",
    "dispersion_compensate",
    "slice_and_normalize",
    "spectral_distance",
    "match_points",
    "decide",
    "evm",
    "ber",
    "receive_frame",
]


class RxError(ValueError):
    pass


@dataclass
class DecisionReport:
    tx_bits: np.ndarray
    rx_bits: np.ndarray
    per_symbol: list            # (received points, label, distance, reliable)
    ber: float
    evm: float
    distance_km: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise RxError("BER must lie in [0, 1]")

    @property
    def n_symbols(self):
        return len(self.per_symbol)

    @property
    def symbol_errors(self):
        tx = np.asarray(self.tx_bits).reshape(-1, 2)
        rx = np.asarray(self.rx_bits).reshape(-1, 2)
        return int(np.sum(np.any(tx != rx, axis=1)))


# ------------------------------------------------------------ synchronization

def _sc_metric(x, L):
    n = len(x)
    idx = np.arange(n)
    prod = np.conj(x) * np.roll(x, -L)
    # circular running sums of length L
    cs = np.concatenate([[0], np.cumsum(np.concatenate([prod, prod[:L]]))])
    P = cs[idx + L] - cs[idx]
    e = np.abs(np.roll(x, -L)) ** 2
    ce = np.concatenate([[0], np.cumsum(np.concatenate([e, e[:L]]))])
    R = (ce[idx + L] - ce[idx]).real
    M = np.abs(P) ** 2 / np.maximum(R, 1e-300) ** 2
    return P, M


def schmidl_cox_sync(w: Waveform, half_len: int, plateau_tol=1e-3, min_peak=0.5,
                     reference=None, expected=None, search_radius=None):
    """
    Locate a two-identical-halves preamble.

    Returns ``(offset, cfo_hz)``: the preamble start index and the frequency
    offset estimated from the phase of the half-window correlation.

    Without ``reference`` the offset is the midpoint of the timing-metric
    plateau and the metric peak must exceed ``min_peak``.  Any signal with a
    period of ``half_len`` samples produces such a plateau, so when the known
    preamble samples are given the offset is instead the peak of the
    energy-normalized circular cross-correlation with them, which must
    exceed ``min_peak``.  ``expected`` and ``search_radius`` restrict the
    search to a circular window (timing carried over from a previous
    capture).
    """
    x = w.samples
    L = int(half_len)
    if L < 1 or 2 * L > len(x):
        raise RxError("preamble half length does not fit the waveform")
    P, M = _sc_metric(x, L)
    if expected is not None and search_radius is not None:
        dist = np.abs((np.arange(len(x)) - int(expected) + len(x) // 2) % len(x) - len(x) // 2)
        allowed = dist <= search_radius
    else:
        allowed = np.ones(len(x), bool)
    if reference is not None:
        reference = np.asarray(reference, complex)
        ref = np.zeros(len(x), complex)
        ref[:len(reference)] = reference
        xc = np.fft.ifft(np.fft.fft(x) * np.conj(np.fft.fft(ref)))
        # normalize by the energy under the window so strong data does not win
        n = len(reference)
        e = np.abs(x) ** 2
        ce = np.concatenate([[0], np.cumsum(np.concatenate([e, e[:n]]))])
        local = ce[np.arange(len(x)) + n] - ce[:len(x)]
        rho = np.abs(xc) / np.sqrt(np.maximum(local, 1e-300) * np.sum(np.abs(reference) ** 2))
        rho[~allowed] = 0.0
        off = int(np.argmax(rho))
        if rho[off] < min_peak:
            raise RxError(f"no preamble found (correlation {rho[off]:.3f} < {min_peak})")
    else:
        Mw = np.where(allowed, M, 0.0)
        k = int(np.argmax(Mw))
        if Mw[k] < min_peak:
            raise RxError(f"no preamble found (metric peak {Mw[k]:.3f} < {min_peak})")
        thr = (1 - plateau_tol) * Mw[k]
        lo = k
        while lo - 1 >= 0 and Mw[lo - 1] >= thr:
            lo -= 1
        hi = k
        while hi + 1 < len(M) and Mw[hi + 1] >= thr:
            hi += 1
        off = (lo + hi) // 2
    cfo = np.angle(P[off]) / (2 * np.pi * L * w.dt)
    return off, float(cfo)


def dispersion_compensate(w: Waveform, accumulated_beta2: float) -> Waveform:
    """Undo linear dispersion ``exp(i beta2 L w^2 / 2)``; ``beta2 L`` in s^2."""
    wom = 2 * np.pi * np.fft.fftfreq(len(w), d=w.dt)
    X = np.fft.fft(w.samples) * np.exp(-0.5j * accumulated_beta2 * wom ** 2)
    return w.with_samples(np.fft.ifft(X))


def cfo_compensate(w: Waveform, cfo_hz: float) -> Waveform:
    t = np.arange(len(w)) * w.dt
    return w.with_samples(w.samples * np.exp(-2j * np.pi * cfo_hz * t))


# ------------------------------------------------------------------ slicing

def slice_and_normalize(w: Waveform, table, n_symbols: int, start: int = 0,
                        oversample_to: int = 1024, window_offset: int | None = None):
    """
    Dimensionless period samples of each received symbol.

    ``start`` is the index of the first CP sample.  The body window begins
    ``window_offset`` table samples after it (default: the CP length, i.e.
    plain CP removal).  The waveform rate must be an integer multiple of the
    table rate.
    """
    r = w.sample_rate / table.sample_rate
    if abs(r - round(r)) > 1e-9 or r < 1:
        raise RxError("receiver rate must be an integer multiple of the symbol table rate")
    r = int(round(r))
    spp = table.samples_per_symbol * r
    cp = (table.cp_len if window_offset is None else int(window_offset)) * r
    body = table.body_len * r
    if not 0 <= cp <= spp - body:
        raise RxError("body window must lie inside the symbol slot")
    if start + (n_symbols - 1) * spp + cp + body > len(w):
        raise RxError(f"frame holds fewer than {n_symbols} symbols")
    target = 1e-3 * 10 ** (table.launch_power / 10)
    scale = np.sqrt(table.units.P0 * target / table.design_power)
    out = []
    for n in range(n_symbols):
        a = start + n * spp + cp
        seg = w.samples[a:a + body] / scale
        if oversample_to != len(seg):
            seg = resample(seg, oversample_to)
        out.append(seg)
    return out


# ---------------------------------------------------------------- decisions

def match_points(a, b):
    """Minimum over permutations of sum |a_k - b_perm(k)|^2 and the permutation."""
    a = np.asarray(a)
    b = np.asarray(b)
    best = (np.inf, None)
    for p in permutations(range(len(b))):
        d = float(np.sum(np.abs(a - b[list(p)]) ** 2))
        if d < best[0]:
            best = (d, p)
    return best


def spectral_distance(a, b):
    return match_points(a, b)[0]


def _pad(points, n, table):
    pts = list(points)
    if len(pts) >= n:
        return np.array(pts[:n]), False
    allp = np.concatenate(table.spectra())
    centre = complex(np.mean(allp.real), np.mean(allp.imag))
    return np.array(pts + [centre] * (n - len(pts))), True


def decide(recv, table):
    """
    Nearest constellation symbol under the permutation-invariant metric.

    Returns ``(label, distance, reliable)``.  Missing points are replaced by
    the constellation centroid and cost a fixed penalty.
    """
    pts = recv.points if isinstance(recv, SpectrumEstimate) else np.asarray(recv)
    n = len(table.symbols[0].spectrum.points)
    if len(pts) == 0:
        return table.symbols[0].bits, np.inf, False
    padded, short = _pad(pts, n, table)
    penalty = 10 * table.min_distance() * (n - min(len(pts), n)) if short else 0.0
    best = None
    for s in table.symbols:
        d = spectral_distance(np.array(s.spectrum.points), padded) + penalty
        if best is None or d < best[1]:
            best = (s.bits, d)
    return best[0], best[1], not short


def evm(tx_spectra, rx_spectra):
    """
    RMS error of permutation-matched spectral points divided by the RMS
    magnitude of the transmitted points.
    """
    num = 0.0
    den = 0.0
    for a, b in zip(tx_spectra, rx_spectra):
        a = np.asarray(a)
        b = np.asarray(b)
        if len(b) < len(a):
            b = np.concatenate([b, np.full(len(a) - len(b), np.mean(a))])
        num += match_points(a, b[:len(a)])[0]
        den += float(np.sum(np.abs(a) ** 2))
    if den == 0:
        raise RxError("no symbols")
    return float(np.sqrt(num / den))


def ber(tx_bits, rx_bits):
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.shape != rx.shape or tx.size == 0:
        raise RxError("bit sequences must be non-empty and of equal length")
    return float(np.mean(tx != rx))


# ----------------------------------------------------------------- pipeline

def receive_frame(w: Waveform, table, tx_bits, preamble=True, oversample_to=1024,
                  grid=(8, 6), tol=1e-9, compensate_cfo=True, distance_km=0.0,
                  accumulated_beta2=0.0, window_offset=None, expected_offset=None,
                  search_radius=None):
    """
    Full receiver: sync, CFO removal, slicing, forward PNFT, decisions.

    Synchronization runs on a copy with ``accumulated_beta2`` (s^2) of linear
    dispersion removed, so that the linear preamble survives long links; the
    symbols themselves are sliced from the uncompensated waveform.  With the
    default ``window_offset`` the body window sits in the middle of the
    symbol slot, leaving half the CP as guard on either side.  The root search
    is seeded with the constellation points and a coarse grid over the box
    spanned by the constellation.
    """
    from .signal_design import bits_to_labels, labels_to_bits, schmidl_cox_preamble

    tx_bits = np.asarray(tx_bits, dtype=int)
    n_sym = len(tx_bits) // 2
    r = int(round(w.sample_rate / table.sample_rate))
    if window_offset is None:
        window_offset = table.cp_len // 2
    start = 0
    cfo = 0.0
    off = 0
    if preamble:
        half = table.samples_per_symbol * r // 2
        ref = schmidl_cox_preamble(table.samples_per_symbol, table.preamble_seed)
        if r > 1:
            ref = resample(ref, len(ref) * r)
        ws = dispersion_compensate(w, accumulated_beta2) if accumulated_beta2 else w
        off, cfo = schmidl_cox_sync(ws, half, reference=ref, expected=expected_offset,
                                    search_radius=search_radius)
        if compensate_cfo:
            w = cfo_compensate(w, cfo)
        # circular frame: rotate so the preamble starts at 0
        w = w.with_samples(np.roll(w.samples, -off))
        start = 2 * half
    slices = slice_and_normalize(w, table, n_sym, start, oversample_to, window_offset)
    dt = table.body_period / oversample_to
    allp = np.concatenate(table.spectra())
    box = auto_search_box(allp)
    per = []
    labels = []
    rx_spectra = []
    tx_spectra = []
    tx_labels = bits_to_labels(tx_bits)
    for seg, lab in zip(slices, tx_labels):
        est = find_main_spectrum(seg, dt, box, grid, tol, extra_seeds=allp)
        est = reduce_spectrum(est, 3)
        label, dist, ok = decide(est, table)
        per.append((est.points, label, dist, ok))
        labels.append(label)
        rx_spectra.append(est.points)
        tx_spectra.append(np.array(table.by_label(lab).spectrum.points))
    rx_bits = labels_to_bits(labels) if labels else np.zeros(0, int)
    b = ber(tx_bits, rx_bits) if len(tx_bits) else 0.0
    e = evm(tx_spectra, rx_spectra) if tx_spectra else 0.0
    return DecisionReport(tx_bits, rx_bits, per, b, e, distance_km,
                          {"cfo_hz": cfo, "offset": off if preamble else 0,
                           "unreliable": int(sum(not p[3] for p in per))})
