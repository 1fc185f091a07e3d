"""Solver-agnostic conic programs.

A :class:`ConicProgram` minimises ``c @ x + c0`` over a real vector ``x`` made of
named blocks, subject to constraints of the form ``A @ x + b in K`` with ``K``
one of

``zero``      all rows equal 0
``nonneg``    all rows >= 0
``soc``       consecutive cones (t, z) with t >= ||z||
``rsoc``      consecutive cones (x, y, z) with 2 x y >= ||z||^2, x, y >= 0
``exp``       consecutive triples (x, y, z) with y exp(x / y) <= z, y > 0

Text dump format (:func:`dump`), for debugging only::

    program <name> n=<n> rows=<rows>
    block <name> <offset> <size>
    objective <c0> <i>:<c_i> ...
    <kind> <tag> dims=<d1,d2,...> row=<b> <j>:<a_j> ... | row=...

one constraint per line; coefficients are printed with 17 significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONE_KINDS = ("zero", "nonneg", "soc", "rsoc", "exp")


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    name: str
    offset: int
    size: int

    @property
    def slice(self):
        return slice(self.offset, self.offset + self.size)


@dataclass(frozen=True)
class Constraint:
    kind: str
    A: sp.csr_matrix
    b: np.ndarray
    dims: tuple
    tag: str


@dataclass(frozen=True)
class ConicProgram:
    name: str
    blocks: tuple
    c: np.ndarray
    c0: float
    constraints: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def n(self):
        return int(self.c.shape[0])

    def block(self, name):
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise KeyError(name)

    def split(self, x):
        """Primal vector -> ``{block name: values}``."""
        return {blk.name: np.array(x[blk.slice]) for blk in self.blocks}

    def tags(self):
        return [con.tag for con in self.constraints]

    def objective(self, x):
        return float(self.c @ x + self.c0)

    def residuals(self, x):
        """Per-constraint cone violation (0 when ``x`` satisfies the constraint)."""
        return [cone_violation(con.kind, con.A @ x + con.b, con.dims) for con in self.constraints]

    def max_violation(self, x):
        res = self.residuals(x)
        return max(res) if res else 0.0


def cone_violation(kind, s, dims):
    if kind == "zero":
        return float(np.max(np.abs(s), initial=0.0))
    if kind == "nonneg":
        return float(max(0.0, -np.min(s, initial=0.0)))
    worst, pos = 0.0, 0
    for d in dims:
        c = s[pos:pos + d]
        pos += d
        if kind == "soc":
            worst = max(worst, np.linalg.norm(c[1:]) - c[0])
        elif kind == "rsoc":
            worst = max(worst, float(np.sum(c[2:] ** 2) - 2 * c[0] * c[1]), -c[0], -c[1])
        else:  # exp
            x, y, z = c
            if y > 0:
                worst = max(worst, y * np.exp(min(x / y, 700.0)) - z)
            else:
                worst = max(worst, -y, x if y == 0 else np.inf, -z)
    return float(worst)


class ProgramBuilder:
    """Incrementally assembles a :class:`ConicProgram`."""

    def __init__(self, name):
        self.name = name
        self._blocks = []
        self._n = 0
        self._cons = []
        self._c = {}
        self.c0 = 0.0
        self.metadata = {}

    def add_block(self, name, size):
        blk = Block(name, self._n, int(size))
        self._blocks.append(blk)
        self._n += int(size)
        return blk

    @property
    def n(self):
        return self._n

    def row(self):
        """A fresh zero coefficient row over all variables."""
        return np.zeros(self._n)

    def add_objective(self, blk, coeffs):
        self._c[blk.name] = self._c.get(blk.name, 0.0) + np.asarray(coeffs, dtype=float)

    def add(self, kind, A, b, tag, dims=None):
        if kind not in CONE_KINDS:
            raise ProgramError(f"unsupported cone {kind!r}")
        A = sp.csr_matrix(A)
        b = np.asarray(b, dtype=float).ravel()
        if A.shape != (b.shape[0], self._n):
            raise ProgramError(f"{tag}: A{A.shape} incompatible with b{b.shape} and n={self._n}")
        if dims is None:
            dims = (b.shape[0],) if kind in ("zero", "nonneg") else None
        if dims is None:
            raise ProgramError(f"{tag}: cone dims required for {kind}")
        self._cons.append(Constraint(kind, A, b, tuple(int(d) for d in dims), tag))

    def build(self):
        c = np.zeros(self._n)
        for blk in self._blocks:
            if blk.name in self._c:
                c[blk.slice] = self._c[blk.name]
        c.setflags(write=False)
        for con in self._cons:
            con.b.setflags(write=False)
        prog = ConicProgram(self.name, tuple(self._blocks), c, float(self.c0), tuple(self._cons), dict(self.metadata))
        audit(prog)
        return prog


def audit(program):
    """Convexity / bookkeeping audit; raises :class:`ProgramError` on failure."""
    n = program.n
    if sum(b.size for b in program.blocks) != n:
        raise ProgramError("blocks do not tile the variable vector")
    if not np.all(np.isfinite(program.c)) or not np.isfinite(program.c0):
        raise ProgramError("non-finite objective")
    for con in program.constraints:
        if con.kind not in CONE_KINDS:
            raise ProgramError(f"{con.tag}: non-conic constraint kind {con.kind!r}")
        rows = con.b.shape[0]
        if con.A.shape != (rows, n):
            raise ProgramError(f"{con.tag}: matrix shape {con.A.shape} != ({rows}, {n})")
        if sum(con.dims) != rows:
            raise ProgramError(f"{con.tag}: cone dims {con.dims} do not cover {rows} rows")
        if con.kind == "soc" and min(con.dims) < 1:
            raise ProgramError(f"{con.tag}: empty second-order cone")
        if con.kind == "rsoc" and min(con.dims) < 2:
            raise ProgramError(f"{con.tag}: rotated cone needs >= 2 rows")
        if con.kind == "exp" and set(con.dims) != {3}:
            raise ProgramError(f"{con.tag}: exponential cones are 3-dimensional")
        if not (np.all(np.isfinite(con.A.data)) and np.all(np.isfinite(con.b))):
            raise ProgramError(f"{con.tag}: non-finite coefficients")
    return True


def _fmt(x):
    return format(float(x), ".17g")


def dump(program):
    lines = [f"program {program.name} n={program.n} rows={sum(c.b.shape[0] for c in program.constraints)}"]
    lines += [f"block {b.name} {b.offset} {b.size}" for b in program.blocks]
    nz = np.flatnonzero(program.c)
    lines.append("objective " + " ".join([_fmt(program.c0)] + [f"{i}:{_fmt(program.c[i])}" for i in nz]))
    for con in program.constraints:
        A = con.A.tocsr()
        rows = []
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            coeffs = " ".join(f"{j}:{_fmt(a)}" for j, a in zip(A.indices[lo:hi], A.data[lo:hi]))
            rows.append(f"row={_fmt(con.b[i])} {coeffs}".rstrip())
        dims = ",".join(str(d) for d in con.dims)
        lines.append(f"{con.kind} {con.tag} dims={dims} " + " | ".join(rows))
    return "\n".join(lines) + "\n"


def load(text):
    """Inverse of :func:`dump`."""
    lines = text.strip().splitlines()
    head = lines[0].split()
    name = head[1]
    n = int(head[2].split("=")[1])
    blocks, cons = [], []
    c, c0 = np.zeros(n), 0.0
    for line in lines[1:]:
        word, rest = line.split(" ", 1)
        if word == "block":
            bname, off, size = rest.split()
            blocks.append(Block(bname, int(off), int(size)))
        elif word == "objective":
            parts = rest.split()
            c0 = float(parts[0])
            for p in parts[1:]:
                i, a = p.split(":")
                c[int(i)] = float(a)
        else:
            tag, dims_s, body = rest.split(" ", 2)
            dims = tuple(int(d) for d in dims_s.split("=")[1].split(","))
            data, indices, indptr, b = [], [], [0], []
            for row in body.split(" | "):
                parts = row.split()
                b.append(float(parts[0].split("=")[1]))
                for p in parts[1:]:
                    j, a = p.split(":")
                    indices.append(int(j))
                    data.append(float(a))
                indptr.append(len(data))
            A = sp.csr_matrix((data, indices, indptr), shape=(len(b), n))
            cons.append(Constraint(word, A, np.array(b), dims, tag))
    prog = ConicProgram(name, tuple(blocks), c, c0, tuple(cons))
    audit(prog)
    return prog
