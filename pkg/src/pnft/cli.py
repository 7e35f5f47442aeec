"""
Command-line front end.

    pnft design  [--config C] [--out D]
    pnft run     [--config C] [--out D] [--seed N] [--spans N]
    pnft analyze WAVEFORM [--config C] [--table T] [--out D]
    pnft report  [--out D]

Errors are reported as one line ``error: <message>`` on stderr with a
nonzero exit status (2 for usage errors, 1 otherwise).
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .channel import Waveform
from .experiment import (CONSTELLATION_HEADER, REPORT_HEADER, constellation_rows, make_bits,
                         report_rows, run_link)
from .pnft_forward import auto_search_box, find_main_spectrum
from .signal_design import assemble_frame, design_constellation, power_and_bandwidth

log = logging.getLogger("pnft")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error: {message}\n")
        sys.exit(2)


def _config(args):
    cfg = formats.load_config(args.config) if args.config else formats.default_config()
    run = cfg.run
    link = cfg.link
    if getattr(args, "seed", None) is not None:
        run = replace(run, seed=args.seed)
        link = replace(link, rng_seed=args.seed)
    if getattr(args, "spans", None) is not None:
        if args.spans < 0:
            raise CliError("--spans must be non-negative")
        run = replace(run, spans=args.spans)
    return replace(cfg, run=run, link=link)


def _table(cfg, path=None):
    path = path or cfg.table
    if path:
        return formats.load_table(path)
    log.info("designing constellation")
    return design_constellation(cfg.template, cfg.link)


def _out(args):
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _design_points(table):
    return {s.bits: np.array(s.spectrum.points) for s in table.symbols}


# ----------------------------------------------------------------- commands

def cmd_design(args):
    cfg = _config(args)
    out = _out(args)
    table = design_constellation(cfg.template, cfg.link, validate=True)
    formats.save_table(table, out / "table.yaml")
    rows = []
    for s in table.symbols:
        amp = np.abs(s.body_samples)
        for k, p in enumerate(s.spectrum.points):
            rows.append([s.bits, k, p.real, p.imag, s.residual, amp.max(), amp.min(),
                         s.join_index, s.params.k0])
        rate = table.body_len / table.body_period
        formats.write_waveform(Waveform(s.body_samples, rate, "dimensionless"),
                               out / f"symbol_{s.bits}.pnftw")
    formats.write_csv(out / "symbols.csv",
                      ["label", "point", "re", "im", "residual", "peak", "minimum", "join_index", "k0"],
                      rows)
    w = assemble_frame(table, make_bits(1000, cfg.run.seed))
    p_dbm, bw = power_and_bandwidth(w)
    formats.write_csv(out / "design.csv", ["quantity", "value"], [
        ["launch_power_dbm", p_dbm], ["bandwidth_99_hz", bw], ["bit_rate_bps", table.bit_rate],
        ["min_spectral_distance", table.min_distance()], ["T0_s", table.units.T0],
        ["L0_m", table.units.L0], ["P0_w", table.units.P0],
        ["samples_per_symbol", table.samples_per_symbol], ["cp_len", table.cp_len],
    ])
    print(f"designed 4 symbols -> {out / 'table.yaml'} (power {p_dbm:.2f} dBm, "
          f"99% bandwidth {bw / 1e9:.2f} GHz)")


def _tx_spectrum(w, nfft=4096):
    """Averaged periodogram, centred, in dB relative to the maximum."""
    x = w.samples
    n = len(x) // nfft
    if n == 0:
        x = np.pad(x, (0, nfft - len(x)))
        n = 1
    P = np.mean(np.abs(np.fft.fft(x[:n * nfft].reshape(n, nfft), axis=1)) ** 2, axis=0)
    f = np.fft.fftshift(np.fft.fftfreq(nfft, d=w.dt))
    P = np.fft.fftshift(P)
    return f, 10 * np.log10(P / P.max() + 1e-30)


def cmd_run(args):
    cfg = _config(args)
    out = _out(args)
    r = cfg.run
    table = _table(cfg)
    bits = make_bits(r.n_symbols, r.seed, r.single_symbol)
    formats.save_config(cfg, out / "config.yaml")
    formats.save_table(table, out / "table.yaml")
    tx = assemble_frame(table, bits)
    formats.write_waveform(tx, out / "tx.pnftw")
    f, p = _tx_spectrum(tx)
    formats.write_csv(out / "tx_spectrum.csv", ["frequency_hz", "power_db"], zip(f, p))
    reports = run_link(table, cfg.link, bits, r.spans, r.taps(), noise=r.noise,
                       oversampling=r.oversampling, cfo_hz=r.cfo_hz,
                       compensate_cfo=r.compensate_cfo, oversample_to=r.oversample_to,
                       grid=r.grid, search_radius=r.search_radius)
    formats.write_csv(out / "metrics.csv", REPORT_HEADER, report_rows(reports))
    rows = [row for rep in reports for row in constellation_rows(rep)]
    formats.write_csv(out / "constellation.csv", CONSTELLATION_HEADER, rows)
    last = reports[-1]
    print(f"{len(reports)} taps -> {out / 'metrics.csv'} (span {last.meta['spans']}: "
          f"BER {last.ber:.3g}, EVM {last.evm:.4f})")


def cmd_analyze(args):
    w = formats.read_waveform(args.waveform)
    out = _out(args)
    x = w.samples
    if w.units == "physical":
        if not (args.config or args.table):
            raise CliError("physical waveforms need --config or --table for the unit scales")
        table = _table(_config(args), args.table)
        target = 1e-3 * 10 ** (table.launch_power / 10)
        x = x / np.sqrt(table.units.P0 * target / table.design_power)
        dt = w.dt / table.units.T0
    else:
        dt = w.dt
    T = len(x) * dt
    # every main-spectrum point satisfies |lambda| <= max|q| + pi / T
    A = float(np.max(np.abs(x)))
    R = A + np.pi / T
    box = (-R, R, 0.0, A + 0.1)
    est = find_main_spectrum(x, dt, box, tuple(args.grid))
    rows = [[k, p.real, p.imag, e] for k, (p, e) in enumerate(zip(est.points, est.residuals))]
    formats.write_csv(out / "spectrum.csv", ["point", "re", "im", "residual"], rows)
    print(f"{len(rows)} main-spectrum points -> {out / 'spectrum.csv'}")


def _dict_rows(path):
    header, rows = formats.read_csv(path)
    return [dict(zip(header, r)) for r in rows]


def cmd_report(args):
    from .plotting import plot_constellation, plot_design, plot_metrics, plot_tx_spectrum

    out = Path(args.out)
    if not out.is_dir():
        raise CliError(f"output directory {out} does not exist")
    made = []
    table = formats.load_table(out / "table.yaml") if (out / "table.yaml").exists() else None
    design = _design_points(table) if table else {}
    if table is not None:
        bodies = {s.bits: s.body_samples for s in table.symbols}
        made.append(plot_design(bodies, design, out / "design.png"))
    if (out / "metrics.csv").exists():
        made.append(plot_metrics(_dict_rows(out / "metrics.csv"), out / "metrics.png"))
    if (out / "constellation.csv").exists():
        rows = _dict_rows(out / "constellation.csv")
        for n in sorted({r["spans"] for r in rows}):
            sel = [r for r in rows if r["spans"] == n]
            made.append(plot_constellation(sel, design, out / f"constellation_{n:03d}.png",
                                           f"{n} spans"))
    if (out / "tx_spectrum.csv").exists():
        rows = _dict_rows(out / "tx_spectrum.csv")
        made.append(plot_tx_spectrum([r["frequency_hz"] for r in rows],
                                     [r["power_db"] for r in rows], out / "tx_spectrum.png"))
    if not made:
        raise CliError(f"no report data in {out}")
    print(f"{len(made)} figures written to {out}")


# --------------------------------------------------------------------- main

def build_parser():
    p = _Parser(prog="pnft", description="PNFT transmission twin")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False):
        sp.add_argument("--config", "-c", help="YAML run configuration")
        sp.add_argument("--out", "-o", default="out", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, help="override bit and noise seeds")
            sp.add_argument("--spans", type=int, help="override the number of spans")

    common(sub.add_parser("design", help="design the constellation and write the table"))
    common(sub.add_parser("run", help="simulate the link and write reports"), seed=True)
    a = sub.add_parser("analyze", help="forward PNFT of one stored period")
    a.add_argument("waveform")
    a.add_argument("--table", help="symbol table for unit scales")
    a.add_argument("--grid", type=int, nargs=2, default=(60, 40), metavar=("NX", "NY"))
    common(a)
    r = sub.add_parser("report", help="render figures from the CSV reports in --out")
    r.add_argument("--out", "-o", default="out")
    return p


COMMANDS = {"design": cmd_design, "run": cmd_run, "analyze": cmd_analyze, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except Exception as e:  # noqa: BLE001 - every failure becomes one line
        msg = " ".join(str(e).split()) or type(e).__name__
        sys.stderr.write(f"error: {msg}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
