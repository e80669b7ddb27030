"""On-disk formats: binary matrices, state directories, manifests, drift logs.

Matrix file layout (all little-endian)::

    b"IGNN" | version u16 | rows u64 | cols u64 | rows*cols float64, row-major
"""
from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .adaptive import DriftSample
from .graph import FormatError, Graph, load_edge_list, write_edge_list
from .propagation import PropagationConfig, PropagationState

MAGIC = b"IGNN"
VERSION = 1
_HEADER = struct.Struct("<4sHQQ")


def matrix_to_bytes(M: np.ndarray) -> bytes:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={M.ndim}")
    rows, cols = M.shape
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + M.astype("<f8", copy=False).tobytes(order="C")


def matrix_from_bytes(data: bytes, source: str | None = None) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise FormatError("truncated matrix header", source=source)
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", source=source)
    if version != VERSION:
        raise FormatError(f"unsupported matrix format version {version}", source=source)
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(
            f"payload length {len(data) - _HEADER.size} != 8*{rows}*{cols}", source=source
        )
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return flat.astype(np.float64).reshape(rows, cols)


def write_matrix(path: str | Path, M: np.ndarray) -> None:
    Path(path).write_bytes(matrix_to_bytes(M))


def read_matrix(path: str | Path) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes(), source=str(path))


def read_features(path: str | Path) -> np.ndarray:
    """Binary matrix file, or whitespace-separated text rows (``#`` comments)."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return matrix_from_bytes(data, source=str(path))
    rows = []
    width = None
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise FormatError(f"bad number in {line!r}", lineno, str(path)) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(f"expected {width} values, got {len(row)}", lineno, str(path))
        rows.append(row)
    if not rows:
        raise FormatError("no feature rows", source=str(path))
    return np.asarray(rows, dtype=np.float64)


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def array_digest(M: np.ndarray) -> str:
    return hashlib.sha256(matrix_to_bytes(M)).hexdigest()


# ---- key=value text -------------------------------------------------------


def dump_kv(pairs: Iterable[tuple[str, object]]) -> str:
    lines = []
    for key, value in pairs:
        if "=" in key or "\n" in key or "\n" in str(value):
            raise ValueError(f"unencodable manifest entry {key!r}")
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_kv(text: str, source: str | None = None) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise FormatError(f"expected key=value, got {line!r}", lineno, source)
        out[key] = value
    return out


class Manifest:
    """Ordered ``key=value`` record of one CLI run."""

    def __init__(self) -> None:
        self.items: list[tuple[str, object]] = []

    def add(self, key: str, value: object) -> None:
        self.items.append((key, value))

    def add_stats(self, phase: str, stats) -> None:
        self.add(f"{phase}.pushes", stats.pushes)
        self.add(f"{phase}.touched_entries", stats.touched_entries)
        self.add(f"{phase}.wall_time", float(stats.wall_time))

    def text(self) -> str:
        return dump_kv(self.items)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.text())


# ---- state directory -------------------------------------------------------

STATE_FILES = ("estimate.bin", "residual.bin", "signal.bin")


@dataclass
class StoredState:
    graph: Graph
    cfg: PropagationConfig
    state: PropagationState


def save_state(directory: str | Path, g: Graph, cfg: PropagationConfig, state: PropagationState) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, M in zip(STATE_FILES, (state.estimate, state.residual, state.signal)):
        write_matrix(d / name, M)
    buf = io.StringIO()
    write_edge_list(g, buf)
    (d / "graph.txt").write_text(buf.getvalue())
    header = dump_kv(
        [
            ("format", "ignn-state"),
            ("version", VERSION),
            ("alpha", float(cfg.alpha)),
            ("beta", float(cfg.beta)),
            ("epsilon", float(cfg.epsilon)),
            ("nodes", state.node_count),
            ("dims", state.dims),
        ]
    )
    (d / "header.txt").write_text(header)


def load_state(directory: str | Path) -> StoredState:
    d = Path(directory)
    head_path = d / "header.txt"
    try:
        head = parse_kv(head_path.read_text(), str(head_path))
    except FileNotFoundError:
        raise FormatError("missing header.txt", source=str(d)) from None
    if head.get("format") != "ignn-state":
        raise FormatError("not an ignn state directory", source=str(head_path))
    try:
        cfg = PropagationConfig(float(head["alpha"]), float(head["beta"]), float(head["epsilon"]))
        n, dims = int(head["nodes"]), int(head["dims"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad state header: {exc}", source=str(head_path)) from None
    mats = [read_matrix(d / name) for name in STATE_FILES]
    for name, M in zip(STATE_FILES, mats):
        if M.shape != (n, dims):
            raise FormatError(f"shape {M.shape} != header ({n}, {dims})", source=str(d / name))
    with open(d / "graph.txt", "rb") as fh:
        g = load_edge_list(fh, str(d / "graph.txt")).graph
    if g.node_count != n:
        raise FormatError(f"graph has {g.node_count} nodes, header says {n}", source=str(d))
    return StoredState(g, cfg, PropagationState(*mats))


# ---- drift logs and schedules ---------------------------------------------


def load_drift_log(stream: IO[str], source: str | None = None) -> list[DriftSample]:
    """Lines ``<event_index> <delta_z> [<baseline_norm>]``; ``#`` comments."""
    out: list[DriftSample] = []
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) not in (2, 3):
            raise FormatError(f"expected '<event_index> <delta_z> [<baseline>]', got {line!r}", lineno, source)
        try:
            idx = int(parts[0])
            dz = float(parts[1])
            base = float(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise FormatError(f"bad number in {line!r}", lineno, source) from None
        if dz < 0 or not np.isfinite(dz):
            raise FormatError(f"drift must be finite and >= 0, got {dz}", lineno, source)
        if out and idx <= out[-1].event_index:
            raise FormatError("event indices must increase", lineno, source)
        out.append(DriftSample(idx, dz, base))
    return out


def write_drift_log(samples: Iterable[DriftSample], stream: IO[str]) -> None:
    for s in samples:
        if s.baseline_norm is None:
            stream.write(f"{s.event_index} {s.delta_z!r}\n")
        else:
            stream.write(f"{s.event_index} {s.delta_z!r} {s.baseline_norm!r}\n")


def write_schedule(indices: Iterable[int], stream: IO[str]) -> None:
    for i in indices:
        stream.write(f"{i}\n")


def write_labels(labels: np.ndarray, stream: IO[str]) -> None:
    for b in labels.tolist():
        stream.write(f"{b}\n")
