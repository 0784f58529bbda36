"""Line-oriented text format describing network systems.

Example::

    netred-system 1
    [graph]
    vertices 3
    edge 1 2 1
    edge 2 3 2.5
    [inertias]
    uniform 1
    [input]
    leaders 1
    [output]
    incidence
    [agent]
    single_integrator

Sections and their entries:

``[graph]``
    ``vertices N``, optional ``directed true|false``, then either ``edge i j w``
    lines or a single ``grid ROWS COLS W`` line.
``[inertias]``
    ``uniform M`` or ``values m1 ... mN``.
``[input]`` / ``[output]``
    ``leaders i ...`` (input only), ``incidence`` or ``identity`` (output
    only), or ``matrix R C`` followed by ``R`` lines ``row v1 ... vC``.
``[agent]``
    ``single_integrator``; ``vanderpol`` followed by ``mu``, ``sigma`` and ``c``
    lines; or ``linear`` followed by matrices ``E``, ``A``, ``B``, ``C``, ``K``,
    each written as ``NAME R C`` plus ``row`` lines.

Blank lines and lines starting with ``#`` are ignored.  Numbers are written in
the shortest form that reads back to the same double (at most 17 significant
digits), so writing a parsed file reproduces it byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import WeightedGraph, grid_graph
from .mas import AgentDynamics, LinearMas, incidence_output, leader_follower_input

MAGIC = "netred-system 1"
SECTIONS = ("graph", "inertias", "input", "output", "agent")
AGENT_MATRICES = ("E", "A", "B", "C", "K")
VANDERPOL_KEYS = ("mu", "sigma", "c")


class ParseError(ValueError):
    """Syntax or content error with a 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        self.line, self.column = line, column
        super().__init__(f"line {line}, column {column}: {message}")


def format_number(x) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


@dataclass
class SystemFile:
    """Parsed system description; keeps the chosen representation of each map."""

    n_vertices: int
    edges: list = field(default_factory=list)
    grid: tuple | None = None
    directed: bool = False
    inertias: tuple = ("uniform", 1.0)
    input: tuple = ("leaders", [1])
    output: tuple = ("identity",)
    agent: tuple = ("single_integrator",)

    # -- conversion -----------------------------------------------------------

    def graph(self) -> WeightedGraph:
        if self.grid is not None:
            return grid_graph(*self.grid)
        return WeightedGraph(self.n_vertices, tuple(self.edges), self.directed)

    def inertia_vector(self) -> np.ndarray:
        if self.inertias[0] == "uniform":
            return np.full(self.n_vertices, float(self.inertias[1]))
        return np.asarray(self.inertias[1], dtype=float)

    def input_matrix(self) -> np.ndarray:
        if self.input[0] == "leaders":
            return leader_follower_input(self.n_vertices, self.input[1])
        return np.asarray(self.input[1], dtype=float)

    def output_matrix(self, graph: WeightedGraph | None = None) -> np.ndarray:
        kind = self.output[0]
        if kind == "incidence":
            return incidence_output(graph or self.graph())
        if kind == "identity":
            return np.eye(self.n_vertices)
        return np.asarray(self.output[1], dtype=float)

    @property
    def is_nonlinear(self) -> bool:
        return self.agent[0] == "vanderpol"

    @property
    def agent_order(self) -> int:
        if self.agent[0] == "vanderpol":
            return 2
        if self.agent[0] == "linear":
            return np.asarray(self.agent[1]["A"]).shape[0]
        return 1

    def agent_dynamics(self) -> AgentDynamics:
        if self.agent[0] == "single_integrator":
            return AgentDynamics.single_integrator()
        if self.agent[0] == "linear":
            return AgentDynamics(**self.agent[1])
        raise ValueError("Van der Pol agents have no linear agent model")

    def to_linear_mas(self) -> LinearMas:
        g = self.graph()
        return LinearMas(g, self.inertia_vector(), self.input_matrix(), self.output_matrix(g),
                         self.agent_dynamics())

    def to_nonlinear_mas(self):
        from .nonlinear import linear_instance, vanderpol_network

        g = self.graph()
        if self.agent[0] == "vanderpol":
            return vanderpol_network(g, inertias=self.inertia_vector(), input_map=self.input_matrix(),
                                     output_map=self.output_matrix(g), **self.agent[1])
        return linear_instance(self.to_linear_mas())

    # -- serialization --------------------------------------------------------

    def dumps(self) -> str:
        out = [MAGIC, "[graph]", f"vertices {self.n_vertices}"]
        if self.directed:
            out.append("directed true")
        if self.grid is not None:
            rows, cols, w = self.grid
            out.append(f"grid {rows} {cols} {format_number(w)}")
        else:
            out.extend(f"edge {i} {j} {format_number(w)}" for i, j, w in self.edges)
        out.append("[inertias]")
        if self.inertias[0] == "uniform":
            out.append(f"uniform {format_number(self.inertias[1])}")
        else:
            out.append("values " + " ".join(format_number(v) for v in self.inertias[1]))
        out.append("[input]")
        if self.input[0] == "leaders":
            out.append("leaders " + " ".join(str(int(v)) for v in self.input[1]))
        else:
            out.extend(_matrix_lines("matrix", self.input[1]))
        out.append("[output]")
        if self.output[0] in ("incidence", "identity"):
            out.append(self.output[0])
        else:
            out.extend(_matrix_lines("matrix", self.output[1]))
        out.append("[agent]")
        kind = self.agent[0]
        out.append(kind)
        if kind == "vanderpol":
            out.extend(f"{k} {format_number(self.agent[1][k])}" for k in VANDERPOL_KEYS)
        elif kind == "linear":
            for name in AGENT_MATRICES:
                out.extend(_matrix_lines(name, self.agent[1][name]))
        return "\n".join(out) + "\n"

    def dump(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "SystemFile":
        return _Parser(text).parse()

    @classmethod
    def load(cls, path) -> "SystemFile":
        return cls.loads(Path(path).read_text())


def _matrix_lines(name: str, M) -> list[str]:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"{name} {M.shape[0]} {M.shape[1]}"]
    lines.extend("row " + " ".join(format_number(v) for v in row) for row in M)
    return lines


class _Parser:
    def __init__(self, text: str):
        self.lines = []
        for no, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            tokens, col = [], 0
            for tok in raw.split():
                col = raw.index(tok, col)
                tokens.append((tok, col + 1))
                col += len(tok)
            self.lines.append((no, tokens))
        self.pos = 0

    # helpers
    def _peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def _next(self):
        item = self._peek()
        if item is None:
            last = self.lines[-1][0] if self.lines else 1
            raise ParseError("unexpected end of file", last)
        self.pos += 1
        return item

    @staticmethod
    def _int(tok, line, lo=None):
        s, col = tok
        try:
            v = int(s)
        except ValueError:
            raise ParseError(f"expected an integer, got {s!r}", line, col) from None
        if lo is not None and v < lo:
            raise ParseError(f"value must be at least {lo}, got {v}", line, col)
        return v

    @staticmethod
    def _float(tok, line):
        s, col = tok
        try:
            v = float(s)
        except ValueError:
            raise ParseError(f"expected a number, got {s!r}", line, col) from None
        if not np.isfinite(v):
            raise ParseError(f"non-finite number {s!r}", line, col)
        return v

    @staticmethod
    def _arity(tokens, line, count):
        if len(tokens) != count:
            # point at the first surplus token, or just past the last one when values are missing
            if len(tokens) > count:
                col = tokens[count][1]
            else:
                col = tokens[-1][1] + len(tokens[-1][0]) + 1
            raise ParseError(f"{tokens[0][0]!r} expects {count - 1} value(s), got {len(tokens) - 1}",
                             line, col)

    def _matrix(self, tokens, line, expect_rows=None, expect_cols=None):
        self._arity(tokens, line, 3)
        rows = self._int(tokens[1], line, 1)
        cols = self._int(tokens[2], line, 1)
        if expect_rows is not None and rows != expect_rows:
            raise ParseError(f"matrix must have {expect_rows} rows, got {rows}", line, tokens[1][1])
        if expect_cols is not None and cols != expect_cols:
            raise ParseError(f"matrix must have {expect_cols} columns, got {cols}", line, tokens[2][1])
        M = np.zeros((rows, cols))
        for k in range(rows):
            no, toks = self._next()
            if toks[0][0] != "row":
                raise ParseError(f"expected 'row', got {toks[0][0]!r}", no, toks[0][1])
            if len(toks) - 1 != cols:
                raise ParseError(f"row must have {cols} entries, got {len(toks) - 1}", no, toks[0][1])
            M[k] = [self._float(t, no) for t in toks[1:]]
        return M

    def _section(self, name):
        no, toks = self._next()
        if toks[0][0] != f"[{name}]" or len(toks) != 1:
            raise ParseError(f"expected section [{name}], got {' '.join(t for t, _ in toks)!r}",
                             no, toks[0][1])

    def _section_body(self):
        """Yield entries until the next section header."""
        while True:
            item = self._peek()
            if item is None or item[1][0][0].startswith("["):
                return
            self.pos += 1
            yield item

    def parse(self) -> SystemFile:
        no, toks = self._next()
        if " ".join(t for t, _ in toks) != MAGIC:
            raise ParseError(f"expected header {MAGIC!r}", no, toks[0][1])

        # graph
        self._section("graph")
        n = None
        sf = SystemFile(n_vertices=1)
        edges = []
        for no, toks in self._section_body():
            key = toks[0][0]
            if key == "vertices":
                self._arity(toks, no, 2)
                n = self._int(toks[1], no, 1)
            elif key == "directed":
                self._arity(toks, no, 2)
                if toks[1][0] not in ("true", "false"):
                    raise ParseError("directed must be 'true' or 'false'", no, toks[1][1])
                sf.directed = toks[1][0] == "true"
            elif key == "edge":
                self._arity(toks, no, 4)
                i = self._int(toks[1], no, 1)
                j = self._int(toks[2], no, 1)
                w = self._float(toks[3], no)
                if n is not None and (i > n or j > n):
                    raise ParseError(f"vertex id out of range 1..{n}", no, toks[1 if i > n else 2][1])
                if i == j:
                    raise ParseError(f"self-loop at vertex {i}", no, toks[1][1])
                if w <= 0:
                    raise ParseError("edge weight must be positive", no, toks[3][1])
                edges.append((i, j, w))
            elif key == "grid":
                self._arity(toks, no, 4)
                sf.grid = (self._int(toks[1], no, 1), self._int(toks[2], no, 1), self._float(toks[3], no))
            else:
                raise ParseError(f"unknown graph entry {key!r}", no, toks[0][1])
        if n is None:
            raise ParseError("graph section lacks 'vertices'", no)
        if sf.grid is not None:
            if edges:
                raise ParseError("'grid' and 'edge' entries are mutually exclusive", no)
            if sf.grid[0] * sf.grid[1] != n:
                raise ParseError(f"grid has {sf.grid[0] * sf.grid[1]} vertices, expected {n}", no)
        sf.n_vertices = n
        sf.edges = edges
        try:
            sf.graph()
        except ValueError as exc:
            raise ParseError(str(exc), no) from None

        # inertias
        self._section("inertias")
        body = list(self._section_body())
        if len(body) != 1:
            raise ParseError("inertias section needs exactly one entry", no)
        no, toks = body[0]
        if toks[0][0] == "uniform":
            self._arity(toks, no, 2)
            sf.inertias = ("uniform", self._float(toks[1], no))
            vals = [sf.inertias[1]]
        elif toks[0][0] == "values":
            self._arity(toks, no, n + 1)
            vals = [self._float(t, no) for t in toks[1:]]
            sf.inertias = ("values", vals)
        else:
            raise ParseError(f"unknown inertias entry {toks[0][0]!r}", no, toks[0][1])
        if min(vals) <= 0:
            raise ParseError("inertias must be positive", no, toks[1][1])

        # input
        self._section("input")
        no, toks = self._single_entry("input")
        if toks[0][0] == "leaders":
            if len(toks) < 2:
                raise ParseError("'leaders' needs at least one vertex", no, toks[0][1])
            leaders = [self._int(t, no, 1) for t in toks[1:]]
            for t, v in zip(toks[1:], leaders):
                if v > n:
                    raise ParseError(f"leader {v} out of range 1..{n}", no, t[1])
            if len(set(leaders)) != len(leaders):
                raise ParseError("duplicate leaders", no, toks[1][1])
            sf.input = ("leaders", leaders)
        elif toks[0][0] == "matrix":
            sf.input = ("matrix", self._matrix(toks, no, expect_rows=n))
        else:
            raise ParseError(f"unknown input entry {toks[0][0]!r}", no, toks[0][1])
        self._end_of_section("input")

        # output
        self._section("output")
        no, toks = self._single_entry("output")
        if toks[0][0] in ("incidence", "identity"):
            self._arity(toks, no, 1)
            sf.output = (toks[0][0],)
        elif toks[0][0] == "matrix":
            sf.output = ("matrix", self._matrix(toks, no, expect_cols=n))
        else:
            raise ParseError(f"unknown output entry {toks[0][0]!r}", no, toks[0][1])
        self._end_of_section("output")

        # agent
        self._section("agent")
        no, toks = self._single_entry("agent")
        kind = toks[0][0]
        self._arity(toks, no, 1)
        if kind == "single_integrator":
            sf.agent = ("single_integrator",)
        elif kind == "vanderpol":
            params = {}
            for key in VANDERPOL_KEYS:
                no, toks = self._next()
                if toks[0][0] != key:
                    raise ParseError(f"expected {key!r}, got {toks[0][0]!r}", no, toks[0][1])
                self._arity(toks, no, 2)
                params[key] = self._float(toks[1], no)
            sf.agent = ("vanderpol", params)
        elif kind == "linear":
            mats = {}
            for name in AGENT_MATRICES:
                no, toks = self._next()
                if toks[0][0] != name:
                    raise ParseError(f"expected matrix {name!r}, got {toks[0][0]!r}", no, toks[0][1])
                mats[name] = self._matrix(toks, no)
            try:
                AgentDynamics(**mats)
            except ValueError as exc:
                raise ParseError(f"invalid agent matrices: {exc}", no) from None
            sf.agent = ("linear", mats)
        else:
            raise ParseError(f"unknown agent kind {kind!r}", no, toks[0][1])
        self._end_of_section("agent")
        if self._peek() is not None:
            no, toks = self._peek()
            raise ParseError(f"unexpected content {toks[0][0]!r}", no, toks[0][1])
        return sf

    def _single_entry(self, name):
        item = self._peek()
        if item is None or item[1][0][0].startswith("["):
            line = item[0] if item else (self.lines[-1][0] if self.lines else 1)
            raise ParseError(f"{name} section is empty", line)
        return self._next()

    def _end_of_section(self, name):
        item = self._peek()
        if item is not None and not item[1][0][0].startswith("["):
            no, toks = item
            raise ParseError(f"unexpected entry {toks[0][0]!r} in {name} section", no, toks[0][1])


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (e.g. ``small_network.sys``)."""
    return Path(__file__).with_name("data") / name


def load_system(path_or_name) -> SystemFile:
    """Load a system file; bare names of bundled files are accepted too."""
    p = Path(path_or_name)
    if not p.exists():
        cand = bundled_path(p.name if p.suffix else p.name + ".sys")
        if cand.exists():
            p = cand
    return SystemFile.load(p)
