"""Architecture strings such as ``2x64F-Pool32-32F-Pool8-FC256``.

Grammar (keywords are case-insensitive, whitespace is not allowed)::

    PLAN   := ITEM ('-' ITEM)*
    ITEM   := REPEAT | LAYER
    REPEAT := INT ('x' | '×') (LAYER | '(' PLAN ')')
    LAYER  := INT 'F' | 'P/2' | 'Pool' INT | 'FC' [INT] | 'GFC' INT | '0hop' INT | 'Drop' [FLOAT]

``nF`` is a graph convolution with n filters, ``Pool n`` graph embed pooling to n
vertices, ``P/2`` stride-2 max pooling on image grids, ``0hop n`` a per-vertex
linear map (identity slice only). A bare ``FC`` means ``FC128`` and a bare
``Drop`` means ``Drop0.5``.

``GFC k`` is read as embed pooling to a single vertex followed by ``FC k``. The
alternative reading (one pooled vertex carrying k features) is not supported.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Tuple, Union

from .errors import ArchSyntaxError, EmptyPlan

__all__ = [
    "ArchPlan",
    "Dropout",
    "EmbedPool",
    "FC",
    "GConv",
    "GFC",
    "GridMaxPool",
    "ZeroHop",
    "param_counts",
    "parse_arch",
    "render_arch",
]

DEFAULT_FC_WIDTH = 128
DEFAULT_DROPOUT = 0.5


@dataclass(frozen=True)
class GConv:
    filters: int

    def render(self):
        return f"{self.filters}F"


@dataclass(frozen=True)
class ZeroHop:
    filters: int

    def render(self):
        return f"0hop{self.filters}"


@dataclass(frozen=True)
class EmbedPool:
    target: int

    def render(self):
        return f"Pool{self.target}"


@dataclass(frozen=True)
class GridMaxPool:
    def render(self):
        return "P/2"


@dataclass(frozen=True)
class FC:
    outputs: int

    def render(self):
        return f"FC{self.outputs}"


@dataclass(frozen=True)
class GFC:
    outputs: int

    def render(self):
        return f"GFC{self.outputs}"


@dataclass(frozen=True)
class Dropout:
    rate: float = DEFAULT_DROPOUT

    def __post_init__(self):
        if not 0 <= self.rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def render(self):
        return f"Drop{self.rate!r}"


LayerSpec = Union[GConv, ZeroHop, EmbedPool, GridMaxPool, FC, GFC, Dropout]


@dataclass(frozen=True)
class ArchPlan:
    layers: Tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise EmptyPlan("architecture has no layers")
        targets = [l.target for l in self.layers if isinstance(l, EmbedPool)]
        if any(b >= a for a, b in zip(targets, targets[1:])):
            warnings.warn(f"embed pooling targets do not strictly decrease: {targets}", stacklevel=3)

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __str__(self):
        return render_arch(self)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def offset(self, pos=None):
        return len(self.text[:self.pos if pos is None else pos].encode("utf-8"))

    def fail(self, expected, pos=None):
        raise ArchSyntaxError(self.offset(pos), expected, self.text)

    def peek(self, n=1):
        return self.text[self.pos:self.pos + n]

    def accept(self, keyword):
        if self.peek(len(keyword)).lower() == keyword.lower():
            self.pos += len(keyword)
            return True
        return False

    def integer(self, what="integer", minimum=1):
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit() and self.text[self.pos].isascii():
            self.pos += 1
        if start == self.pos:
            self.fail(what)
        value = int(self.text[start:self.pos])
        if value < minimum:
            self.fail(f"{what} >= {minimum}", start)
        return value

    def number(self):
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos] in "0123456789."):
            self.pos += 1
        token = self.text[start:self.pos]
        try:
            value = float(token)
        except ValueError:
            self.fail("dropout rate", start)
        if not 0 <= value < 1:
            self.fail("dropout rate in [0, 1)", start)
        return value

    def plan(self):
        items = list(self.item())
        while self.peek() == "-":
            self.pos += 1
            items.extend(self.item())
        return items

    def item(self):
        if self.peek().isdigit() and not self.peek(4).lower() == "0hop":
            start = self.pos
            count = self.integer("count")
            if self.accept("x") or self.accept("×"):
                if self.peek() == "(":
                    self.pos += 1
                    body = self.plan()
                    if self.peek() != ")":
                        self.fail("')'")
                    self.pos += 1
                else:
                    body = list(self.layer())
                return body * count
            if self.accept("F"):
                return [GConv(count)]
            self.pos = start
            self.integer()
            self.fail("'F' or repeat marker 'x'")
        return list(self.layer())

    def layer(self):
        if self.peek().isdigit() and self.peek(4).lower() != "0hop":
            count = self.integer("filter count")
            if not self.accept("F"):
                self.fail("'F'")
            return [GConv(count)]
        if self.accept("0hop"):
            return [ZeroHop(self.integer("0-hop filter count"))]
        if self.accept("P/2"):
            return [GridMaxPool()]
        if self.accept("Pool"):
            return [EmbedPool(self.integer("pool target"))]
        if self.accept("GFC"):
            return [GFC(self.integer("GFC width"))]
        if self.accept("FC"):
            if self.peek().isdigit():
                return [FC(self.integer("FC width"))]
            return [FC(DEFAULT_FC_WIDTH)]
        if self.accept("Drop"):
            if self.peek() and self.peek() in "0123456789.":
                return [Dropout(self.number())]
            return [Dropout()]
        self.fail("layer (nF, P/2, PoolN, FC[N], GFCN, 0hopN, Drop[R]) or repeat")


def parse_arch(text: str) -> ArchPlan:
    if not text:
        raise EmptyPlan("empty architecture string")
    parser = _Parser(text)
    layers = parser.plan()
    if parser.pos != len(text):
        parser.fail("'-' or end of string")
    return ArchPlan(tuple(layers))


def render_arch(plan) -> str:
    layers = plan.layers if isinstance(plan, ArchPlan) else tuple(plan)
    if not layers:
        raise EmptyPlan("cannot render an empty plan")
    return "-".join(layer.render() for layer in layers)


def param_counts(plan, n_features, n_slices, n_vertices=None, grid=None):
    """Learned-parameter count of each plan layer (batch norm excluded).

    Entries are ``None`` when an FC input width depends on an unknown vertex count.
    ``grid`` is ``(height, width)`` for plans using ``P/2``.
    """
    C, L, N = n_features, n_slices, n_vertices
    if grid is not None:
        N = grid[0] * grid[1]
    vector = False
    counts = []
    for spec in plan.layers:
        if isinstance(spec, GConv):
            counts.append(L * C * spec.filters + spec.filters)
            C = spec.filters
        elif isinstance(spec, ZeroHop):
            counts.append(C * spec.filters + spec.filters)
            C = spec.filters
        elif isinstance(spec, EmbedPool):
            counts.append(L * C * spec.target + spec.target)
            N, grid = spec.target, None
        elif isinstance(spec, GFC):
            counts.append(L * C + 1 + C * spec.outputs + spec.outputs)
            C, vector = spec.outputs, True
        elif isinstance(spec, FC):
            n_in = C if vector else (None if N is None else N * C)
            counts.append(None if n_in is None else n_in * spec.outputs + spec.outputs)
            C, vector = spec.outputs, True
        elif isinstance(spec, GridMaxPool):
            counts.append(0)
            if grid is not None:
                grid = (-(-grid[0] // 2), -(-grid[1] // 2))
                N = grid[0] * grid[1]
            else:
                N = None
        else:
            counts.append(0)
    return counts
