"""
Constellation design, unit scaling, lookup tables and frame assembly.

A symbol is a genus-2 finite-gap solution whose two frequencies are exactly
commensurate.  After a unimodular change of homology basis one frequency is
(numerically) zero; zeroing it exactly leaves a solution periodic in t.  The
spectrum is then shifted along the real axis so that the carrier frequency
vanishes, and finally each symbol is rescaled so that all bodies share the
same dimensionless period.
"""

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import brentq

from .channel import LinkConfig, Waveform, gamma_effective
from .finite_gap import (
    FiniteGapError, FiniteGapParams, MainSpectrum, build_curve, change_basis,
    compute_params, evaluate_solution, nlse_residual, quasiperiodize, scale_params,
)

__all__ = [
    "DesignError",
    "UnitMap",
    "ConstellationTemplate",
    "SymbolDefinition",
    "SymbolTable",
    "design_constellation",
    "solve_commensurate",
    "periodic_symbol_params",
    "scale_to_physical",
    "sample_symbol",
    "assemble_frame",
    "schmidl_cox_preamble",
    "power_and_bandwidth",
    "bits_to_labels",
    "labels_to_bits",
    "LABELS",
]

LABELS = ("00", "01", "10", "11")


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class UnitMap:
    """
    Physical scales of the dimensionless NLSE.

    ``L0 = T0^2 / |beta2|`` and ``P0 = 1 / (gamma_eff L0)``; SI units.
    """

    T0: float
    L0: float
    P0: float

    def __post_init__(self):
        if not (self.T0 > 0 and self.L0 > 0 and self.P0 > 0):
            raise DesignError("unit scales must be positive")

    @classmethod
    def from_link(cls, T0, link: LinkConfig):
        L0 = T0 ** 2 / abs(link.beta2_si)
        g_eff = gamma_effective(link.gamma, link.alpha, link.span_length) * 1e-3
        return cls(T0, L0, 1.0 / (g_eff * L0))

    def time_to_phys(self, t):
        return np.asarray(t) * self.T0

    def time_to_dimless(self, T):
        return np.asarray(T) / self.T0

    def dist_to_phys(self, z):
        return np.asarray(z) * self.L0

    def dist_to_dimless(self, Z):
        return np.asarray(Z) / self.L0

    def field_to_phys(self, psi):
        return np.asarray(psi) * np.sqrt(self.P0)

    def field_to_dimless(self, A):
        return np.asarray(A) / np.sqrt(self.P0)


@dataclass(frozen=True)
class ConstellationTemplate:
    """
    Genus-2 spectrum family: a plane-wave point with two open gaps.

    For level ``l`` with modulation ``m = levels[l]`` and spread
    ``s = spreads[l]`` the base spectrum is::

        { -s d1 + i m b1,   x + i,   s d2 + i m b2 }

    with ``x`` solved so that the two frequencies have ratio ``ratio``
    (p, q), i.e. ``q Omega_1 = p Omega_2``.  The mirrored spectrum is the
    second member of each pair.  The overall scale is irrelevant because
    every symbol is rescaled to the common period.

    With ``match_phase_rate`` the spreads of all levels but the first are
    solved (inside ``spread_bracket``) so that every symbol has the same
    nonlinear phase rotation rate ``k0`` after scaling.  Symbols with
    unequal rates accumulate a phase twist at every level transition,
    which is a dominant source of inter-symbol interference.
    """

    d1: float = 0.465
    b1: float = 0.06
    d2: float = 0.275
    b2: float = 0.3
    levels: tuple = (1.0, 1.6)
    spreads: tuple = (1.0, 1.0)
    match_phase_rate: bool = True
    spread_bracket: tuple = (1.0, 3.0)
    ratio: tuple = (2, 1)
    x_bracket: tuple = (-0.5, 0.5)
    min_separation: float = 0.05
    min_distance: float = 0.01
    body_len: int = 32
    cp_len: int = 32
    symbol_period: float = 1e-9          # s
    launch_power: float = 2.5            # dBm
    carrier_harmonics: tuple = (0, 0, 0, 0)
    bandwidth_target: float = 4.5e9      # Hz
    bandwidth_tol: float = 0.15
    power_tol: float = 0.02              # relative
    residual_tol: float = 1e-6

    def spectrum(self, x, level, spread=None):
        m = self.levels[level]
        sp = self.spreads[level] if spread is None else spread
        pts = (-sp * self.d1 + 1j * m * self.b1, x + 1j, sp * self.d2 + 1j * m * self.b2)
        return MainSpectrum(pts, self.min_separation)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SymbolDefinition:
    bits: str
    spectrum: MainSpectrum
    params: FiniteGapParams
    body_samples: np.ndarray
    cp_len: int
    phase_offset: float
    join_index: int
    residual: float = float("nan")

    @property
    def samples_per_symbol(self):
        return len(self.body_samples) + self.cp_len

    def segment(self):
        """CP + body, rotated to start the body at the amplitude minimum."""
        rot = np.roll(self.body_samples, -self.join_index)
        return np.concatenate([rot[len(rot) - self.cp_len:], rot]) if self.cp_len else rot


@dataclass(frozen=True)
class SymbolTable:
    symbols: tuple
    symbol_period: float
    sample_rate: float
    launch_power: float
    units: UnitMap
    body_period: float                   # dimensionless
    design_power: float                  # W, mean segment power of the table
    template: ConstellationTemplate = field(default_factory=ConstellationTemplate)
    preamble_seed: int = 12345

    @property
    def cp_len(self):
        return self.symbols[0].cp_len

    @property
    def body_len(self):
        return len(self.symbols[0].body_samples)

    @property
    def samples_per_symbol(self):
        return self.symbols[0].samples_per_symbol

    @property
    def bit_rate(self):
        return 2.0 / self.symbol_period

    def by_label(self, label):
        for s in self.symbols:
            if s.bits == label:
                return s
        raise DesignError(f"unknown bit pattern {label!r}")

    def spectra(self):
        return [np.array(s.spectrum.points) for s in self.symbols]

    def min_distance(self):
        from .rx_dsp import spectral_distance
        sp = self.spectra()
        return min(spectral_distance(a, b) for i, a in enumerate(sp) for b in sp[i + 1:])


# ------------------------------------------------------------------ design

def _params(spectrum, **kw):
    return compute_params(build_curve(spectrum), **kw)


def _or_nan(f, x):
    # invalid spectra (crossing cuts, separation floor) inside a scan bracket
    try:
        return f(x)
    except (FiniteGapError, ValueError):
        return np.nan


def solve_commensurate(template: ConstellationTemplate, level: int, xtol=1e-14, spread=None):
    """Solve for the middle point's real part giving commensurate frequencies."""
    p, q = template.ratio

    def f(x):
        P = _params(template.spectrum(x, level, spread), check=False)
        return q * P.Omega[0] - p * P.Omega[1]

    # stay strictly between the side points: crossing one reorders the cuts
    # and produces a spurious sign change
    sp = template.spreads[level] if spread is None else spread
    lo = max(template.x_bracket[0], -sp * template.d1 + template.min_separation)
    hi = min(template.x_bracket[1], sp * template.d2 - template.min_separation)
    if not lo < hi:
        raise DesignError("side points leave no room for the middle point")
    xs = np.linspace(lo, hi, 13)
    vals = [_or_nan(f, x) for x in xs]
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa * fb <= 0:
            return brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    raise DesignError(
        f"no commensurate point for level {level} in x range {template.x_bracket}"
    )


def _unimodular(Omega, max_den=6, tol=1e-9):
    """Integer matrix M, det 1, with (M Omega)[0] = 0 for commensurate Omega."""
    a, b = Omega
    for q in range(1, max_den + 1):
        for p in range(-max_den, max_den + 1):
            if p == 0 or np.gcd(p, q) != 1:
                continue
            if abs(q * a - p * b) <= tol * max(abs(a), abs(b)):
                # extended Euclid: u p + v q = 1
                u, v = _bezout(p, q)
                return np.array([[q, -p], [u, v]])
    raise DesignError(f"frequencies {Omega} are not commensurate with small integers")


def _bezout(p, q):
    old_r, r, old_s, s, old_t, t = p, q, 1, 0, 0, 1
    while r:
        k = old_r // r
        old_r, r = r, old_r - k * r
        old_s, s = s, old_s - k * s
        old_t, t = t, old_t - k * t
    if old_r < 0:
        old_s, old_t = -old_s, -old_t
    return old_s, old_t


def periodic_symbol_params(spectrum: MainSpectrum):
    """
    Params of a commensurate genus-2 spectrum in a basis where the first
    frequency is exactly zero.  Returns ``(params, M)``.
    """
    P = _params(spectrum)
    M = _unimodular(P.Omega)
    Q = quasiperiodize(change_basis(P, M))
    if Q.zeroed_index != 0:
        raise DesignError("basis reduction failed to isolate the vanishing frequency")
    if Q.Omega[1] < 0:
        Q = change_basis(Q, [[1, 0], [0, -1]])
    return Q, M


def scale_to_physical(params: FiniteGapParams, units: UnitMap, symbol_period: float,
                      cp_duration: float) -> FiniteGapParams:
    """
    Rescale ``params`` so the amplitude period equals the body duration.

    Uses ``psi -> a psi(a^2 z, a t)``.
    """
    nz = [w for w in params.Omega if w != 0.0]
    if len(nz) != 1:
        raise DesignError("params have no finite period; quasiperiodize first")
    period = 2 * np.pi / abs(nz[0])
    target = units.time_to_dimless(symbol_period - cp_duration)
    return scale_params(params, period / target)


def sample_symbol(params: FiniteGapParams, sample_rate: float, body_len: int):
    """``body_len`` samples of psi(0, t) at ``sample_rate`` (dimensionless)."""
    t = np.arange(body_len) / sample_rate
    return evaluate_solution(params, 0.0, t)


def _segment_power(body, cp_len, join):
    rot = np.roll(body, -join)
    seg = np.concatenate([rot[len(rot) - cp_len:], rot]) if cp_len else rot
    return np.mean(np.abs(seg) ** 2)


def _level_base(template, level, spread=None):
    """Carrier-free base spectrum of one level and its periodic params."""
    x = solve_commensurate(template, level, spread=spread)
    s = template.spectrum(x, level, spread)
    P, _ = periodic_symbol_params(s)
    s = s.shifted(P.Omega0 / 2)
    P, _ = periodic_symbol_params(s)
    return s, P


def _scaled_k0(P, body_period):
    # psi -> a psi(a^2 z, a t) maps k0 to a^2 k0
    a = 2 * np.pi / (P.Omega[1] * body_period)
    return a * a * P.k0


def _base_spectra(template):
    """Shifted base spectra (carrier removed) of every level."""
    s0, P0 = _level_base(template, 0)
    out = [s0]
    T = 2 * np.pi / P0.Omega[1]
    k_ref = _scaled_k0(P0, T)
    for lev in range(1, len(template.levels)):
        if not template.match_phase_rate:
            out.append(_level_base(template, lev)[0])
            continue

        def f(sp):
            return _scaled_k0(_level_base(template, lev, sp)[1], T) - k_ref

        lo, hi = template.spread_bracket
        grid = np.linspace(lo, hi, 6)
        vals = [_or_nan(f, v) for v in grid]
        for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if fa * fb <= 0:
                sp = brentq(f, a, b, xtol=1e-12)
                break
        else:
            raise DesignError(f"no spread in {template.spread_bracket} matches the phase rate of level 0")
        out.append(_level_base(template, lev, sp)[0])
    return out


def design_constellation(template: ConstellationTemplate = ConstellationTemplate(),
                         link: LinkConfig = LinkConfig(), validate: bool = True) -> SymbolTable:
    """
    Build the four-symbol table.

    Labels: level 0 base/mirror -> 00/01, level 1 base/mirror -> 10/11,
    so mirror pairs differ in the last bit.
    """
    if len(template.levels) != 2:
        raise DesignError("the constellation uses exactly two amplitude levels")
    spectra = []
    for s in _base_spectra(template):
        spectra += [s, s.mirrored()]
    raw = []
    for k, s in enumerate(spectra):
        P, _ = periodic_symbol_params(s)
        if abs(P.Omega0) > 1e-8 * max(1.0, abs(P.Omega[1])):
            raise DesignError(f"carrier not removed for symbol {k} (Omega0 = {P.Omega0:.3e})")
        raw.append(P)

    # common dimensionless body period: that of the first symbol
    body_period = 2 * np.pi / raw[0].Omega[1]
    spp = template.body_len + template.cp_len
    sample_rate = spp / template.symbol_period
    cp_dur = template.cp_len / sample_rate
    T0 = (template.symbol_period - cp_dur) / body_period
    units = UnitMap.from_link(T0, link)

    symbols = []
    powers = []
    for k, (s, P) in enumerate(zip(spectra, raw)):
        a = P.Omega[1] * body_period / (2 * np.pi)
        a = 1.0 / a
        Ps = scale_params(P, a)
        m = template.carrier_harmonics[k]
        spec = s.scaled(a)
        if m:
            # shift by a multiple of half the body frequency keeps the body periodic
            c = m * np.pi / body_period
            spec = spec.shifted(c)
            Ps, _ = periodic_symbol_params(spec)
        body = sample_symbol(Ps, template.body_len / body_period, template.body_len)
        amp = np.abs(body)
        join = int(np.argmin(amp))
        res = nlse_residual(Ps) if validate else float("nan")
        if validate and not res < template.residual_tol:
            raise DesignError(f"symbol {LABELS[k]}: NLSE residual {res:.3e} above {template.residual_tol}")
        powers.append(_segment_power(body, template.cp_len, join))
        symbols.append(SymbolDefinition(LABELS[k], spec, Ps, body, template.cp_len, 0.0, join, res))

    design_power = float(np.mean(powers)) * units.P0
    table = SymbolTable(tuple(symbols), template.symbol_period, sample_rate,
                        template.launch_power, units, body_period, design_power, template)
    if validate:
        _validate(table)
    return table


def _validate(table: SymbolTable):
    t = table.template
    peaks = sorted({round(float(np.max(np.abs(s.body_samples))), 6) for s in table.symbols})
    if len(peaks) < 2:
        raise DesignError("constellation needs two distinct peak amplitudes")
    for i in (0, 2):
        a = np.array(table.symbols[i].spectrum.points)
        b = np.array(table.symbols[i + 1].spectrum.points)
        if not np.allclose(np.sort_complex(-a.conj()), np.sort_complex(b), atol=1e-12):
            raise DesignError("symbols do not form mirror pairs")
    dmin = table.min_distance()
    if dmin < t.min_distance:
        raise DesignError(f"minimum spectral distance {dmin:.3g} below floor {t.min_distance}")
    target = 1e-3 * 10 ** (t.launch_power / 10)
    if abs(table.design_power / target - 1) > t.power_tol:
        raise DesignError(
            f"designed power {10 * np.log10(table.design_power / 1e-3):.2f} dBm misses the "
            f"launch power {t.launch_power} dBm"
        )
    rng = np.random.default_rng(0)
    w = assemble_frame(table, rng.integers(0, 2, 2 * 1000), preamble=True)
    _, bw = power_and_bandwidth(w)
    if abs(bw / t.bandwidth_target - 1) > t.bandwidth_tol:
        raise DesignError(f"99% bandwidth {bw / 1e9:.2f} GHz outside target "
                          f"{t.bandwidth_target / 1e9:.2f} GHz +/- {t.bandwidth_tol:.0%}")


# ------------------------------------------------------------------- bits

def bits_to_labels(bits):
    bits = np.asarray(bits, dtype=int).ravel()
    if len(bits) % 2:
        raise DesignError("bit sequence length must be even")
    if np.any((bits != 0) & (bits != 1)):
        raise DesignError("bits must be 0 or 1")
    return [f"{a}{b}" for a, b in bits.reshape(-1, 2)]


def labels_to_bits(labels):
    out = []
    for lab in labels:
        if lab not in LABELS:
            raise DesignError(f"unknown bit pattern {lab!r}")
        out += [int(lab[0]), int(lab[1])]
    return np.array(out, dtype=int)


# ------------------------------------------------------------------ frames

def schmidl_cox_preamble(n, seed=12345, occupied=0.25):
    """
    Two identical halves of a band-limited pseudo-random sequence, unit
    mean power.  ``occupied`` is the fraction of the band used.
    """
    if n % 2:
        raise DesignError("preamble length must be even")
    half = n // 2
    rng = np.random.default_rng(seed)
    X = np.zeros(half, complex)
    k = np.fft.fftfreq(half, 1 / half)
    keep = np.abs(k) <= max(1, int(occupied * half / 2))
    X[keep] = np.exp(2j * np.pi * rng.random(keep.sum()))
    x = np.fft.ifft(X)
    x = x / np.sqrt(np.mean(np.abs(x) ** 2))
    return np.concatenate([x, x])


def _phase_match(segments, bodies):
    """
    Constant phase factor per segment making the phase continuous.

    Each symbol is exactly periodic, so the sample that would follow a
    segment is the first sample of its (rotated) body.  The next segment is
    rotated so that its first sample has that phase.
    """
    out = []
    nxt = None
    for seg, body in zip(segments, bodies):
        phi = 0.0 if nxt is None else np.angle(nxt) - np.angle(seg[0])
        rot = np.exp(1j * phi)
        out.append(seg * rot)
        nxt = body[0] * rot
    return out


def assemble_frame(table: SymbolTable, bits, preamble: bool = True,
                   phase_match: bool = True, max_symbols: int = 1000) -> Waveform:
    """
    Transmit waveform for ``bits`` (physical units, table sample rate).

    Each symbol contributes its CP + body segment; a constant phase factor per
    symbol makes the phase continuous across boundaries.  The optional
    preamble is one symbol period with two identical halves.  The frame is
    scaled by the fixed factor that maps the table's mean symbol power to the
    launch power.
    """
    labels = bits_to_labels(bits)
    if len(labels) > max_symbols:
        raise DesignError(f"frame exceeds {max_symbols} symbols")
    syms = [table.by_label(lab) for lab in labels]
    segs = [sym.segment() for sym in syms]
    if phase_match:
        segs = _phase_match(segs, [np.roll(sym.body_samples, -sym.join_index) for sym in syms])
    psi = np.concatenate(segs) if segs else np.zeros(0, complex)
    A = table.units.field_to_phys(psi)
    target = 1e-3 * 10 ** (table.launch_power / 10)
    A = A * np.sqrt(target / table.design_power)
    if preamble:
        pre = schmidl_cox_preamble(table.samples_per_symbol, table.preamble_seed) * np.sqrt(target)
        A = np.concatenate([pre, A])
    if len(A) == 0:
        raise DesignError("empty frame without preamble")
    return Waveform(A, table.sample_rate, "physical", table.launch_power)


def power_and_bandwidth(w: Waveform, fraction=0.99):
    """
    Mean power (dBm) and the smallest interval symmetric about the spectral
    centroid holding ``fraction`` of the energy (Hz).
    """
    x = w.samples
    p = np.mean(np.abs(x) ** 2)
    P = np.abs(np.fft.fft(x)) ** 2
    f = np.fft.fftfreq(len(x), d=w.dt)
    P = P / P.sum()
    fc = np.sum(f * P)
    d = np.abs(f - fc)
    order = np.argsort(d, kind="stable")
    cum = np.cumsum(P[order])
    idx = int(np.searchsorted(cum, fraction - 1e-12))
    half = d[order][min(idx, len(x) - 1)]
    df = w.sample_rate / len(x)
    return 10 * np.log10(p / 1e-3), float(2 * half + df)
