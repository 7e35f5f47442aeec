"""
On-disk formats.

Configs and symbol tables
    YAML documents with a top-level ``format`` name and integer ``version``.
    Complex numbers are stored as ``[re, im]`` pairs; floats are written with
    ``repr`` precision so a write/read cycle is bit-exact.

Waveforms
    Little-endian binary.  A fixed 64-byte header followed by ``count``
    interleaved float64 (re, im) pairs::

        offset  size  type     field
        0       8     char[8]  magic  b"PNFTWAV\\0"
        8       4     uint32   version (1)
        12      4     uint32   unit flag (0 physical, 1 dimensionless)
        16      8     uint64   sample count
        24      8     float64  sample rate (Hz, or samples per unit time)
        32      32    -        reserved, zero

Reports
    Comma-separated tables with one header row (``csv`` module).
"""

import csv
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .channel import LinkConfig, Waveform
from .finite_gap import FiniteGapParams, MainSpectrum
from .signal_design import ConstellationTemplate, SymbolDefinition, SymbolTable, UnitMap

__all__ = [
    "FormatError",
    "WAVEFORM_MAGIC",
    "CONFIG_VERSION",
    "TABLE_VERSION",
    "RunSettings",
    "RunConfig",
    "default_config",
    "load_config",
    "save_config",
    "save_table",
    "load_table",
    "write_waveform",
    "read_waveform",
    "write_csv",
    "read_csv",
]

WAVEFORM_MAGIC = b"PNFTWAV\0"
WAVEFORM_VERSION = 1
_HEADER = struct.Struct("<8sIIQd32x")
CONFIG_VERSION = 1
TABLE_VERSION = 1
_UNIT_FLAGS = {"physical": 0, "dimensionless": 1}


class FormatError(ValueError):
    pass


# ------------------------------------------------------------------ helpers

def _c2l(z):
    z = np.asarray(z, dtype=complex)
    return [[float(a), float(b)] for a, b in zip(z.real.ravel(), z.imag.ravel())]


def _l2c(v, shape=None):
    a = np.asarray(v, dtype=float).reshape(-1, 2)
    z = a[:, 0] + 1j * a[:, 1]
    return z.reshape(shape) if shape is not None else z


def _tuples_to_lists(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _dump(doc, path):
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def _load(path, name, version):
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"file not found: {path}") from None
    except yaml.YAMLError as e:
        raise FormatError(f"{path}: not valid YAML ({str(e).splitlines()[0]})") from None
    if not isinstance(doc, dict) or doc.get("format") != name:
        raise FormatError(f"{path}: not a {name} file")
    if doc.get("version") != version:
        raise FormatError(f"{path}: unsupported {name} version {doc.get('version')!r}")
    return doc


def _build(cls, d, where):
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise FormatError(f"unknown {where} keys: {', '.join(sorted(extra))}")
    kw = {}
    for f in fields(cls):
        if f.name in d:
            v = d[f.name]
            kw[f.name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise FormatError(f"invalid {where}: {e}") from None


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class RunSettings:
    """Experiment settings outside the template and the link."""

    n_symbols: int = 1000
    seed: int = 7                    # transmitted bits
    spans: int = 30
    tap_stride: int = 1              # receive every n-th span (the last one always)
    noise: bool = True
    oversampling: int = 2            # channel samples per table sample
    oversample_to: int = 1024
    grid: tuple = (8, 6)
    cfo_hz: float = 0.0              # deterministic offset injected at the receiver input
    compensate_cfo: bool = False
    search_radius: int = 64          # timing search around the previous tap's offset
    single_symbol: str | None = None  # repeat one label instead of random bits

    def __post_init__(self):
        if not 0 < self.n_symbols <= 1000:
            raise FormatError("n_symbols must lie in 1..1000")
        if self.spans < 0 or self.tap_stride < 1 or self.oversampling < 1:
            raise FormatError("spans >= 0, tap_stride >= 1 and oversampling >= 1 required")
        if self.single_symbol is not None and self.single_symbol not in ("00", "01", "10", "11"):
            raise FormatError(f"unknown bit pattern {self.single_symbol!r}")

    def taps(self):
        t = list(range(0, self.spans + 1, self.tap_stride))
        if t[-1] != self.spans:
            t.append(self.spans)
        return t


@dataclass(frozen=True)
class RunConfig:
    template: ConstellationTemplate = field(default_factory=ConstellationTemplate)
    link: LinkConfig = field(default_factory=LinkConfig)
    run: RunSettings = field(default_factory=RunSettings)
    table: str | None = None         # precomputed table path, relative to the config


def default_config():
    return RunConfig()


def config_to_dict(cfg: RunConfig):
    doc = {"format": "pnft-config", "version": CONFIG_VERSION}
    doc["template"] = _tuples_to_lists(asdict(cfg.template))
    doc["link"] = _tuples_to_lists(asdict(cfg.link))
    doc["run"] = _tuples_to_lists(asdict(cfg.run))
    if cfg.table is not None:
        doc["table"] = cfg.table
    return doc


def save_config(cfg: RunConfig, path):
    _dump(config_to_dict(cfg), path)


def load_config(path) -> RunConfig:
    doc = _load(path, "pnft-config", CONFIG_VERSION)
    extra = set(doc) - {"format", "version", "template", "link", "run", "table"}
    if extra:
        raise FormatError(f"unknown config sections: {', '.join(sorted(extra))}")
    tpl = _build(ConstellationTemplate, doc.get("template") or {}, "template")
    link = _build(LinkConfig, doc.get("link") or {}, "link")
    run = _build(RunSettings, doc.get("run") or {}, "run")
    table = doc.get("table")
    if table is not None:
        table = str(Path(path).parent / table)
    return RunConfig(tpl, link, run, table)


# -------------------------------------------------------------------- table

def _params_to_dict(P: FiniteGapParams):
    return {
        "U": _c2l(P.U)[0],
        "Omega0": float(P.Omega0),
        "k0": float(P.k0),
        "Omega": [float(v) for v in P.Omega],
        "kvec": [float(v) for v in P.kvec],
        "delta": _c2l(P.delta),
        "tau": _c2l(P.tau),
        "zeroed_index": P.zeroed_index,
    }


def _params_from_dict(d, spectrum):
    g = len(d["Omega"])
    return FiniteGapParams(
        U=complex(*d["U"]), Omega0=float(d["Omega0"]), k0=float(d["k0"]),
        Omega=np.array(d["Omega"], dtype=float), kvec=np.array(d["kvec"], dtype=float),
        delta=_l2c(d["delta"]), tau=_l2c(d["tau"], (g, g)),
        zeroed_index=d.get("zeroed_index"), spectrum=spectrum,
    )


def table_to_dict(table: SymbolTable):
    syms = []
    for s in table.symbols:
        syms.append({
            "bits": s.bits,
            "spectrum": _c2l(s.spectrum.points),
            "min_separation": float(s.spectrum.min_separation),
            "params": _params_to_dict(s.params),
            "body_samples": _c2l(s.body_samples),
            "cp_len": int(s.cp_len),
            "phase_offset": float(s.phase_offset),
            "join_index": int(s.join_index),
            "residual": float(s.residual),
        })
    return {
        "format": "pnft-table",
        "version": TABLE_VERSION,
        "symbol_period": float(table.symbol_period),
        "sample_rate": float(table.sample_rate),
        "launch_power": float(table.launch_power),
        "units": {k: float(getattr(table.units, k)) for k in ("T0", "L0", "P0")},
        "body_period": float(table.body_period),
        "design_power": float(table.design_power),
        "preamble_seed": int(table.preamble_seed),
        "template": _tuples_to_lists(asdict(table.template)),
        "symbols": syms,
    }


def save_table(table: SymbolTable, path):
    _dump(table_to_dict(table), path)


def load_table(path) -> SymbolTable:
    doc = _load(path, "pnft-table", TABLE_VERSION)
    try:
        syms = []
        for s in doc["symbols"]:
            spec = MainSpectrum(tuple(_l2c(s["spectrum"])), s["min_separation"])
            syms.append(SymbolDefinition(
                s["bits"], spec, _params_from_dict(s["params"], spec), _l2c(s["body_samples"]),
                int(s["cp_len"]), float(s["phase_offset"]), int(s["join_index"]), float(s["residual"]),
            ))
        u = doc["units"]
        return SymbolTable(
            tuple(syms), doc["symbol_period"], doc["sample_rate"], doc["launch_power"],
            UnitMap(u["T0"], u["L0"], u["P0"]), doc["body_period"], doc["design_power"],
            _build(ConstellationTemplate, doc["template"], "template"), doc["preamble_seed"],
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"{path}: malformed table ({type(e).__name__}: {e})") from None


# ----------------------------------------------------------------- waveform

def write_waveform(w: Waveform, path):
    x = np.asarray(w.samples, dtype="<c16")
    hdr = _HEADER.pack(WAVEFORM_MAGIC, WAVEFORM_VERSION, _UNIT_FLAGS[w.units], len(x),
                       float(w.sample_rate))
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(x.tobytes())


def read_waveform(path) -> Waveform:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise FormatError(f"file not found: {path}") from None
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the {_HEADER.size}-byte header")
    magic, version, unit, count, rate = _HEADER.unpack_from(raw)
    if magic != WAVEFORM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != WAVEFORM_VERSION:
        raise FormatError(f"{path}: unsupported waveform version {version}")
    units = {v: k for k, v in _UNIT_FLAGS.items()}.get(unit)
    if units is None:
        raise FormatError(f"{path}: unknown unit flag {unit}")
    if count == 0:
        raise FormatError(f"{path}: waveform holds no samples")
    body = raw[_HEADER.size:]
    if len(body) != 16 * count:
        raise FormatError(f"{path}: expected {count} samples, found {len(body) / 16:g}")
    x = np.frombuffer(body, dtype="<c16").astype(complex)
    return Waveform(x, rate, units)


# ---------------------------------------------------------------------- csv

def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path):
    """
    Header and rows; numeric cells are parsed as int or float.

    Columns named ``label`` or ``*_label`` hold bit patterns and stay text.
    """
    def conv(s):
        for f in (int, float):
            try:
                return f(s)
            except ValueError:
                pass
        return s

    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        text = [h == "label" or h.endswith("_label") for h in header]
        return header, [[c if t else conv(c) for c, t in zip(r, text)] for r in rd]
