"""
End-to-end transmission experiment: frame, loop, receiver per span.
"""

import logging

import numpy as np
from scipy.signal import resample

from .channel import LinkConfig, Waveform, recirculate
from .rx_dsp import DecisionReport, cfo_compensate, receive_frame
from .signal_design import SymbolTable, assemble_frame, labels_to_bits

__all__ = ["make_bits", "upsample", "run_link", "report_rows", "constellation_rows"]

log = logging.getLogger(__name__)


def make_bits(n_symbols, seed, single_symbol=None):
    """Random payload, or ``n_symbols`` copies of one label."""
    if single_symbol is not None:
        return labels_to_bits([single_symbol] * n_symbols)
    return np.random.default_rng(seed).integers(0, 2, 2 * n_symbols)


def upsample(w: Waveform, factor: int) -> Waveform:
    """Band-limited (periodic) interpolation onto a ``factor`` times finer grid."""
    if factor == 1:
        return w
    return Waveform(resample(w.samples, len(w) * factor), w.sample_rate * factor,
                    w.units, w.center_power_ref)


def run_link(table: SymbolTable, link: LinkConfig, bits, spans, taps=None, noise=True,
             oversampling=2, cfo_hz=0.0, compensate_cfo=False, oversample_to=1024,
             grid=(8, 6), search_radius=64):
    """
    Send one frame around the loop and run the receiver at selected spans.

    Parameters
    ----------
    taps : sequence of int, optional
        Span counts at which the receiver runs; default every span.
    cfo_hz : float
        Deterministic frequency offset applied at the receiver input (the
        loop's frequency shifters), removed again when ``compensate_cfo``.
    search_radius : int
        Timing is searched within this many table samples of the previous
        tap's offset; the first tap searches the whole frame.

    Returns
    -------
    list of DecisionReport
    """
    taps = list(range(spans + 1)) if taps is None else sorted(set(taps))
    if taps and (taps[0] < 0 or taps[-1] > spans):
        raise ValueError(f"taps must lie in 0..{spans}")
    w = upsample(assemble_frame(table, bits), oversampling)
    outs = recirculate(w, link, spans=spans, noise=noise)
    reports = []
    prev = None
    for n in taps:
        x = outs[n]
        if cfo_hz:
            x = cfo_compensate(x, -cfo_hz)
        rep = receive_frame(
            x, table, bits, oversample_to=oversample_to, grid=grid,
            compensate_cfo=compensate_cfo, distance_km=n * link.span_length,
            accumulated_beta2=link.beta2_si * link.span_m * n,
            expected_offset=prev, search_radius=None if prev is None else search_radius * oversampling,
        )
        prev = rep.meta["offset"]
        rep.meta["spans"] = n
        log.info("span %d: BER %.3g EVM %.4f", n, rep.ber, rep.evm)
        reports.append(rep)
    return reports


REPORT_HEADER = ["spans", "distance_km", "ber", "ser", "evm", "bit_errors", "symbols",
                 "unreliable", "offset", "cfo_hz"]


def report_rows(reports):
    rows = []
    for r in reports:
        nerr = int(np.sum(np.asarray(r.tx_bits) != np.asarray(r.rx_bits)))
        rows.append([r.meta.get("spans", 0), float(r.distance_km), float(r.ber),
                     r.symbol_errors / r.n_symbols, float(r.evm), nerr, r.n_symbols,
                     r.meta.get("unreliable", 0), r.meta.get("offset", 0),
                     float(r.meta.get("cfo_hz", 0.0))])
    return rows


CONSTELLATION_HEADER = ["spans", "symbol", "tx_label", "rx_label", "point", "re", "im", "distance"]


def constellation_rows(report: DecisionReport):
    """Received spectral points, one row per point (scatter data)."""
    from .signal_design import bits_to_labels
    tx = bits_to_labels(report.tx_bits)
    rows = []
    for i, ((pts, lab, dist, _), t) in enumerate(zip(report.per_symbol, tx)):
        for k, p in enumerate(pts):
            rows.append([report.meta.get("spans", 0), i, t, lab, k, float(p.real), float(p.imag),
                         float(dist)])
    return rows
