"""Field persistence, experiment configuration, CSV diagnostics, and the
generated plot script.

Field files carry the magic DS2DFLD1: header (magic, nx, ny as unsigned
32-bit little-endian, box sides as little-endian doubles) followed by
nx*ny interleaved (re, im) doubles, row-major with x fastest. Reads are
validated before allocation and round-trip bit-exactly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fields import ComplexField
from .grid import Grid2D

MAGIC = b"DS2DFLD1"
_HEADER = struct.Struct("<8sIIdd")
_MAX_NODES = 1 << 16


def write_field(path, field: ComplexField) -> None:
    grid = field.grid
    payload = np.ascontiguousarray(field.values.T, dtype=np.complex128)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.nx, grid.ny, grid.lx, grid.ly))
        fh.write(payload.tobytes())


def read_field(path) -> ComplexField:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, nx, ny, lx, ly = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if not (0 < nx <= _MAX_NODES and 0 < ny <= _MAX_NODES):
            raise FormatError(f"{path}: unreasonable dimensions {nx}x{ny}")
        expected = 16 * nx * ny
        payload = fh.read(expected + 1)
        if len(payload) != expected:
            raise FormatError(
                f"{path}: payload is {len(payload)} bytes, expected {expected}"
            )
    flat = np.frombuffer(payload, dtype=np.complex128)
    grid = Grid2D(int(nx), int(ny), float(lx), float(ly))
    return ComplexField(grid, flat.reshape(ny, nx).T)


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Typed key=value configuration with CLI overrides.

    Values are parsed against a schema (name -> converter); unknown keys
    are rejected so typos cannot silently change an experiment.
    """

    entries: dict

    def __getattr__(self, name):
        try:
            return self.entries[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def resolved(self) -> str:
        # the seed is recorded separately in every CSV header
        return " ".join(
            f"{k}={self.entries[k]}" for k in sorted(self.entries) if k != "seed"
        )


def _parse_value(raw: str, conv):
    if conv is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise FormatError(f"not a boolean: {raw!r}")
    return conv(raw)


def parse_config(schema: dict, path=None, overrides=None, defaults=None) -> ExperimentConfig:
    """Build a config from defaults, then a key=value file, then overrides.

    The file format is line-oriented: one `key = value` per line, blank
    lines and `#` comments ignored, no sections.
    """
    entries = dict(defaults or {})
    def absorb(key, raw, where):
        key = key.strip()
        if key not in schema:
            raise FormatError(f"{where}: unknown key {key!r}")
        try:
            entries[key] = _parse_value(str(raw).strip(), schema[key])
        except (ValueError, FormatError) as exc:
            raise FormatError(f"{where}: bad value for {key!r}: {exc}") from exc

    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, raw = body.split("=", 1)
            absorb(key, raw, f"{path}:{lineno}")
    for key, raw in (overrides or {}).items():
        absorb(key, raw, "command line")
    missing = [k for k in schema if k not in entries]
    if missing:
        raise FormatError(f"missing required keys: {', '.join(sorted(missing))}")
    return ExperimentConfig(entries)


# ---------------------------------------------------------------------------
# CSV diagnostics and run artifacts
# ---------------------------------------------------------------------------

def write_csv(path, header, rows, config_line: str = "", seed: int | None = None) -> None:
    """Self-describing CSV: one comment line with the resolved config and
    the RNG seed, one header row, then the data."""
    with open(path, "w") as fh:
        fh.write(f"# config: {config_line} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(c) for c in row) + "\n")


def _format_cell(c):
    if isinstance(c, float):
        return repr(c)
    return str(c)


class RunDirectory:
    """Output directory with an artifact manifest.

    Every completed artifact is appended to MANIFEST so interrupted runs
    are distinguishable from finished ones.
    """

    def __init__(self, root=None):
        root = root or os.environ.get("DS2D_OUTDIR", ".")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = self.root / "MANIFEST"
        self.manifest.write_text("")

    def path(self, name) -> Path:
        return self.root / name

    def done(self, name) -> None:
        with open(self.manifest, "a") as fh:
            fh.write(f"{name}\n")

    def write_field(self, name, field) -> Path:
        p = self.path(name)
        write_field(p, field)
        self.done(name)
        return p

    def write_csv(self, name, header, rows, config_line="", seed=None) -> Path:
        p = self.path(name)
        write_csv(p, header, rows, config_line, seed)
        self.done(name)
        return p

    def write_text(self, name, text) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.done(name)
        return p


PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Plot the CSV diagnostics found next to this script."""
import csv
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).parent


def load(name):
    with open(here / name) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]
    cols = {h: [float(r[i]) for r in data] for i, h in enumerate(header)}
    return cols


for name in {csv_names}:
    cols = load(name)
    keys = list(cols)
    x = cols[keys[0]]
    fig, ax = plt.subplots()
    for k in keys[1:]:
        ax.plot(x, cols[k], label=k)
    ax.set_xlabel(keys[0])
    ax.legend(fontsize=7)
    ax.set_title(name)
    out = here / (Path(name).stem + ".png")
    fig.savefig(out, dpi=130)
    print("wrote", out)
'''


def plot_script_for(csv_names) -> str:
    return PLOT_SCRIPT.replace("{csv_names}", repr(sorted(csv_names)))
