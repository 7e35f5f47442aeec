import subprocess
import sys

import pytest

from pnft import formats
from pnft.cli import main

SMALL = """\
format: pnft-config
version: 1
run:
  n_symbols: 12
  spans: 1
  seed: 3
link:
  rng_seed: 3
"""


@pytest.fixture(scope="module")
def designed(tmp_path_factory):
    out = tmp_path_factory.mktemp("design")
    assert main(["design", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def small_config(designed, tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    (d / "small.yaml").write_text(SMALL + f"table: {designed / 'table.yaml'}\n")
    return d / "small.yaml"


def test_design_outputs(designed):
    for name in ("table.yaml", "symbols.csv", "design.csv"):
        assert (designed / name).exists()
    for lab in ("00", "01", "10", "11"):
        w = formats.read_waveform(designed / f"symbol_{lab}.pnftw")
        assert w.units == "dimensionless" and len(w) == 32
    header, rows = formats.read_csv(designed / "design.csv")
    vals = dict(rows)
    assert abs(vals["launch_power_dbm"] - 2.5) < 0.15
    assert vals["samples_per_symbol"] == 64


def test_analyze_dimensionless(designed, tmp_path):
    rc = main(["analyze", str(designed / "symbol_10.pnftw"), "--grid", "30", "20",
               "--out", str(tmp_path)])
    assert rc == 0
    _, rows = formats.read_csv(tmp_path / "spectrum.csv")
    table = formats.load_table(designed / "table.yaml")
    pts = sorted(table.by_label("10").spectrum.points, key=lambda z: z.real)
    got = sorted((complex(r[1], r[2]) for r in rows if r[2] > 0.05), key=lambda z: z.real)
    assert len(got) == 3
    assert max(abs(a - b) for a, b in zip(pts, got)) < 1e-2


def test_run_and_report(small_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "-c", str(small_config), "-o", str(out1)]) == 0
    assert main(["run", "-c", str(small_config), "-o", str(out2)]) == 0
    for name in ("metrics.csv", "constellation.csv", "tx.pnftw", "config.yaml", "tx_spectrum.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    _, rows = formats.read_csv(out1 / "metrics.csv")
    assert [r[0] for r in rows] == [0, 1]
    assert rows[0][2] == 0.0  # back to back
    # the spans override and a different seed change the output
    out3 = tmp_path / "c"
    assert main(["run", "-c", str(small_config), "-o", str(out3), "--spans", "0",
                 "--seed", "11"]) == 0
    _, rows3 = formats.read_csv(out3 / "metrics.csv")
    assert [r[0] for r in rows3] == [0]
    assert (out3 / "tx.pnftw").read_bytes() != (out1 / "tx.pnftw").read_bytes()
    assert main(["report", "-o", str(out1)]) == 0
    pngs = sorted(p.name for p in out1.glob("*.png"))
    assert pngs == ["constellation_000.png", "constellation_001.png", "design.png",
                    "metrics.png", "tx_spectrum.png"]
    assert all((out1 / p).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "pnft.cli", *args], capture_output=True, text=True)


@pytest.mark.parametrize("args, code", [
    (["run", "--config", "/nonexistent.yaml"], 1),
    (["report", "--out", "/nonexistent_dir"], 1),
    (["run", "--spans", "-2"], 1),
    (["frobnicate"], 2),
    (["run", "--seed", "abc"], 2),
])
def test_errors_are_one_line(args, code):
    r = _cli(*args)
    assert r.returncode == code
    lines = r.stderr.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error: ")


def test_analyze_physical_needs_scales(designed, tmp_path):
    w = tmp_path / "tx.pnftw"
    from pnft.signal_design import assemble_frame
    table = formats.load_table(designed / "table.yaml")
    formats.write_waveform(assemble_frame(table, [0, 1]), w)
    r = _cli("analyze", str(w), "--out", str(tmp_path))
    assert r.returncode == 1 and "--table" in r.stderr
