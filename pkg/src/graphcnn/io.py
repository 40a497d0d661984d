"""Text graph datasets, vertex-task files and a raw binary image container.

Graph dataset (UTF-8, one sample after another)::

    # comment lines start with '#'
    graph N C L label
    <N lines of C floats>
    e l i j w            (0 or more, 1 <= l <= L-1; L counts the identity slice)
    y class mask         (vertex-task files only, exactly N lines)
    end

The identity slice is never written; it is rebuilt on load. A comment of the
form ``# grid H W mode`` right before a sample attaches image geometry to it.
Floats are written with 17 significant digits, which round-trips doubles.

Raw image file: little-endian ``u32 count, u32 height, u32 width, u32 channels``
followed by ``count`` records of ``u8 label`` + ``H*W*C`` ``u8`` pixels
(row-major, channel-last).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, ParseError
from .graph import AdjacencySlice, AdjacencyTensor, GraphSample, GridInfo, graph_violations

__all__ = [
    "format_graph_dataset",
    "load_graph_dataset",
    "load_vertex_task",
    "parse_graph_text",
    "read_raw_images",
    "save_graph_dataset",
    "save_vertex_task",
    "write_raw_images",
]

_RAW_HEADER = struct.Struct("<4I")


def _fmt(x):
    return format(float(x), ".17g")


def _format_sample(sample: GraphSample, vertex_task: bool) -> list:
    lines = []
    if sample.grid is not None:
        lines.append(f"# grid {sample.grid.height} {sample.grid.width} {sample.grid.mode}")
    n, c = sample.vertices.shape
    label = -1 if sample.label is None else int(sample.label)
    lines.append(f"graph {n} {c} {sample.adjacency.L} {label}")
    for row in sample.vertices:
        lines.append(" ".join(_fmt(x) for x in row))
    for l, s in enumerate(sample.adjacency.slices[1:], start=1):
        order = np.lexsort((s.cols, s.rows))
        for k in order:
            lines.append(f"e {l} {int(s.rows[k])} {int(s.cols[k])} {_fmt(s.weights[k])}")
    if vertex_task:
        for y, m in zip(sample.vertex_labels, sample.mask):
            lines.append(f"y {int(y)} {int(m)}")
    lines.append("end")
    return lines


def format_graph_dataset(samples, vertex_task=False) -> str:
    out = []
    for s in samples:
        out.extend(_format_sample(s, vertex_task))
    return "\n".join(out) + "\n"


def save_graph_dataset(samples, path) -> None:
    Path(path).write_text(format_graph_dataset(samples), encoding="utf-8")


def save_vertex_task(sample: GraphSample, path) -> None:
    Path(path).write_text(format_graph_dataset([sample], vertex_task=True), encoding="utf-8")


def _ints(tokens, lineno, what):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(lineno, f"expected integers in {what}, got {' '.join(tokens)!r}") from None


def _floats(tokens, lineno, what):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(lineno, f"expected numbers in {what}, got {' '.join(tokens)!r}") from None


def parse_graph_text(text: str, vertex_task=False) -> list:
    """Parse the text format; errors carry 1-based line numbers."""
    lines = [(k + 1, raw.strip()) for k, raw in enumerate(text.splitlines())]
    samples = []
    pos = 0
    pending_grid = None

    def next_line():
        nonlocal pos, pending_grid
        while pos < len(lines):
            lineno, line = lines[pos]
            pos += 1
            if not line:
                continue
            if line.startswith("#"):
                tok = line[1:].split()
                if len(tok) == 4 and tok[0] == "grid":
                    try:
                        pending_grid = GridInfo(int(tok[1]), int(tok[2]), tok[3])
                    except ValueError:
                        raise ParseError(lineno, "malformed grid comment") from None
                continue
            return lineno, line
        return None, None

    while True:
        lineno, line = next_line()
        if line is None:
            break
        tok = line.split()
        if tok[0] != "graph" or len(tok) != 5:
            raise ParseError(lineno, "expected header 'graph N C L label'")
        n, c, n_slices, label = _ints(tok[1:], lineno, "header")
        if n < 1 or c < 1 or n_slices < 1:
            raise InvariantViolation(lineno, "N, C and L must be >= 1")
        header_line = lineno
        grid, pending_grid = pending_grid, None
        vertices = np.empty((n, c))
        for r in range(n):
            lineno, line = next_line()
            if line is None:
                raise ParseError(len(lines), f"file ended inside vertex block (row {r} of {n})")
            vals = _floats(line.split(), lineno, "vertex row")
            if len(vals) != c:
                raise ParseError(lineno, f"vertex row has {len(vals)} values, expected {c}")
            if not np.all(np.isfinite(vals)):
                raise InvariantViolation(lineno, "non-finite vertex value")
            vertices[r] = vals
        edges = [dict() for _ in range(n_slices)]
        ys, masks = [], []
        while True:
            lineno, line = next_line()
            if line is None:
                raise ParseError(len(lines), "missing 'end'")
            tok = line.split()
            if tok[0] == "end" and len(tok) == 1:
                break
            if tok[0] == "e":
                if ys:
                    raise ParseError(lineno, "edge line after label lines")
                if len(tok) != 5:
                    raise ParseError(lineno, "expected 'e l i j w'")
                l, i, j = _ints(tok[1:4], lineno, "edge")
                (w,) = _floats(tok[4:], lineno, "edge weight")
                if l == 0:
                    raise ParseError(lineno, "slice 0 is the implicit identity and cannot carry edges")
                if not 1 <= l < n_slices:
                    raise InvariantViolation(lineno, f"slice {l} outside [1, {n_slices - 1}]")
                if not (0 <= i < n and 0 <= j < n):
                    raise InvariantViolation(lineno, f"edge ({i},{j}) outside [0,{n})")
                if not np.isfinite(w):
                    raise InvariantViolation(lineno, "non-finite edge weight")
                if (i, j) in edges[l]:
                    raise InvariantViolation(lineno, f"duplicate edge ({i},{j}) in slice {l}")
                edges[l][(i, j)] = w
            elif tok[0] == "y":
                if not vertex_task:
                    raise ParseError(lineno, "label line in a graph dataset")
                if len(tok) != 3:
                    raise ParseError(lineno, "expected 'y class mask'")
                y, m = _ints(tok[1:], lineno, "label")
                if m not in (0, 1):
                    raise InvariantViolation(lineno, f"mask bit must be 0 or 1, got {m}")
                if y < 0:
                    raise InvariantViolation(lineno, f"negative class {y}")
                ys.append(y)
                masks.append(m)
            else:
                raise ParseError(lineno, f"unexpected line {line!r}")
        if vertex_task and len(ys) != n:
            raise InvariantViolation(lineno, f"{len(ys)} label lines for {n} vertices")
        slices = [AdjacencySlice.identity(n)]
        for l in range(1, n_slices):
            slices.append(AdjacencySlice.from_entries(n, [(i, j, w) for (i, j), w in edges[l].items()]))
        sample = GraphSample(
            vertices=vertices,
            adjacency=AdjacencyTensor(tuple(slices)),
            label=None if vertex_task else label,
            vertex_labels=np.array(ys, dtype=np.int64) if vertex_task else None,
            mask=np.array(masks, dtype=np.int64) if vertex_task else None,
            grid=grid,
        )
        problems = graph_violations(sample)
        if problems:
            raise InvariantViolation(header_line, "; ".join(str(p) for p in problems))
        samples.append(sample)
    return samples


def load_graph_dataset(path) -> list:
    return parse_graph_text(Path(path).read_text(encoding="utf-8"))


def load_vertex_task(path) -> GraphSample:
    samples = parse_graph_text(Path(path).read_text(encoding="utf-8"), vertex_task=True)
    if len(samples) != 1:
        raise ParseError(1, f"vertex-task file must hold exactly one graph, found {len(samples)}")
    return samples[0]


def write_raw_images(labels, images) -> bytes:
    """Encode ``count x H x W x C`` uint8 images with uint8 labels."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim == 3:
        images = images[..., None]
    if images.ndim != 4 or labels.shape != (images.shape[0],):
        raise ValueError(f"images {images.shape} / labels {labels.shape} mismatch")
    if images.dtype != np.uint8 or np.any((labels < 0) | (labels > 255)):
        raise ValueError("pixels must be uint8 and labels in [0, 255]")
    count, h, w, c = images.shape
    body = np.empty((count, 1 + h * w * c), dtype=np.uint8)
    body[:, 0] = labels
    body[:, 1:] = images.reshape(count, -1)
    return _RAW_HEADER.pack(count, h, w, c) + body.tobytes()


def read_raw_images(data):
    """Decode raw image bytes (or a path). Returns ``(labels, images)``."""
    if isinstance(data, (str, Path)):
        data = Path(data).read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise ParseError(0, "raw image file shorter than its 16-byte header")
    count, h, w, c = _RAW_HEADER.unpack_from(data)
    expected = _RAW_HEADER.size + count * (1 + h * w * c)
    if len(data) != expected:
        raise ParseError(0, f"raw image file is {len(data)} bytes, header implies {expected}")
    body = np.frombuffer(data, dtype=np.uint8, offset=_RAW_HEADER.size).reshape(count, 1 + h * w * c)
    return body[:, 0].astype(np.int64), body[:, 1:].reshape(count, h, w, c).copy()
