"""CSV and plot-data files with a commented manifest header.

Every file starts with ``# key: value`` lines (the manifest) followed by a
plain CSV body.  Floats are written with ``repr`` so identical runs give
byte-identical bodies.  Each writer has a matching reader.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

MANIFEST_PREFIX = "# "


@dataclass
class RunManifest:
    config_hash: str
    command: str
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    seed: int | None = None
    tolerances: dict = field(default_factory=dict)
    columns: str = ""

    def lines(self) -> list[str]:
        out = []
        for k, v in asdict(self).items():
            if isinstance(v, dict):
                v = json.dumps(v, sort_keys=True)
            out.append(f"{MANIFEST_PREFIX}{k}: {v}")
        return out

    @classmethod
    def from_lines(cls, lines) -> "RunManifest":
        raw = {}
        for line in lines:
            key, _, value = line[len(MANIFEST_PREFIX):].partition(": ")
            raw[key.strip()] = value
        seed = raw.get("seed", "None")
        return cls(config_hash=raw.get("config_hash", ""), command=raw.get("command", ""),
                   version=raw.get("version", ""), timestamp=raw.get("timestamp", ""),
                   seed=None if seed == "None" else int(seed),
                   tolerances=json.loads(raw.get("tolerances") or "{}"),
                   columns=raw.get("columns", ""))


@dataclass
class Table:
    manifest: RunManifest
    columns: list[str]
    rows: list[list]

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def array(self, name: str) -> np.ndarray:
        return np.asarray(self.column(name), dtype=float)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _parse(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def format_table(columns, rows, manifest: RunManifest) -> str:
    buf = io.StringIO()
    for line in manifest.lines():
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_table(path, columns, rows, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_table(columns, rows, manifest))
    return path


def split_header(text: str) -> tuple[list[str], str]:
    """Manifest lines and the CSV body."""
    lines = text.splitlines(keepends=True)
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        k += 1
    return [l.rstrip("\n") for l in lines[:k]], "".join(lines[k:])


def parse_table(text: str) -> Table:
    head, body = split_header(text)
    reader = csv.reader(io.StringIO(body))
    try:
        columns = next(reader)
    except StopIteration:
        raise ValueError("table has no header row") from None
    rows = [[_parse(c) for c in r] for r in reader if r]
    return Table(RunManifest.from_lines(head), columns, rows)


def read_table(path) -> Table:
    return parse_table(Path(path).read_text())


def body_of(path) -> str:
    """CSV body without the manifest, for reproducibility comparisons."""
    return split_header(Path(path).read_text())[1]


# snapshots: long format, one row per (t, x)

def snapshot_rows(times, x, species, snapshots):
    for k, t in enumerate(times):
        block = snapshots[k]
        for j, xj in enumerate(x):
            yield [float(t), float(xj), *(float(v) for v in block[:, j])]


def write_snapshots(path, times, x, species, snapshots, manifest: RunManifest) -> Path:
    columns = ["t", "x", *species]
    return write_table(path, columns, list(snapshot_rows(times, x, species, snapshots)), manifest)


@dataclass
class Snapshots:
    manifest: RunManifest
    times: np.ndarray
    x: np.ndarray
    species: list[str]
    values: np.ndarray  # (n_times, n_species, N)


def read_snapshots(path) -> Snapshots:
    tab = read_table(path)
    if tab.columns[:2] != ["t", "x"]:
        raise ValueError(f"{path}: not a snapshot file (columns {tab.columns[:2]})")
    data = np.asarray(tab.rows, dtype=float)
    times = np.unique(data[:, 0])
    n_t = times.size
    N = data.shape[0] // n_t
    if N * n_t != data.shape[0]:
        raise ValueError(f"{path}: snapshots have unequal lengths")
    values = data[:, 2:].reshape(n_t, N, -1).transpose(0, 2, 1)
    return Snapshots(tab.manifest, times, data[:N, 1], tab.columns[2:], values)


# gnuplot profile stack: one block per time, blocks separated by two blank lines

def write_profile_stack(path, times, x, profile, manifest: RunManifest, label: str = "T") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = manifest.lines()
    out.append(f"# gnuplot: plot '{path.name}' using 1:2 index i, one block per time")
    for k, t in enumerate(times):
        if k:
            out += ["", ""]
        out.append(f"# t = {float(t)!r}")
        out.append(f"# x {label}")
        out += [f"{float(a)!r} {float(b)!r}" for a, b in zip(x, profile[k])]
    path.write_text("\n".join(out) + "\n")
    return path


def read_profile_stack(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(times, x, profiles)`` from a stack written by ``write_profile_stack``."""
    times, blocks, cur = [], [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# t = "):
            times.append(float(line[6:]))
            cur = []
            blocks.append(cur)
        elif line and not line.startswith("#"):
            a, b = line.split()
            cur.append((float(a), float(b)))
    arr = np.asarray(blocks, dtype=float)
    return np.asarray(times), arr[0, :, 0], arr[:, :, 1]
