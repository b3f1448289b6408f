"""Minimal reverse-mode differentiation over an explicit computation graph.

The point of this engine is not speed, it is closure: the derivative of every
primitive is expressed with the same primitives, so a gradient graph is just
another graph and can be differentiated again.  That property is what the
cross-modal analysis relies on (gradients of gradient aggregates), and it is
checked by the test suite rather than assumed.

Primitives: input, const, add, mul (elementwise, scalar broadcast allowed),
matmul (matrix/vector products, transpose flags, outer mode), tanh, softplus
(smooth relu with a sharpness knob), sum (full reduction), select (gather rows
along axis 0), concat (axis 0).  Affine layers are sugar on top.

Graphs are append-only lists of nodes; node ids are list indices and arguments
always point backwards, so increasing id order is a topological order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import NonScalarOutputWithoutSeed, ShapeMismatch, UnboundInput

Array = np.ndarray

PRIMITIVE_OPS = frozenset(
    ["input", "const", "add", "mul", "matmul", "tanh", "softplus", "sum", "select", "concat"]
)


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple[int, ...]
    shape: tuple[int, ...]
    # op-specific payload; unused fields stay at their defaults
    name: str | None = None
    value: Array | None = None
    ta: bool = False
    tb: bool = False
    outer: bool = False
    sharpness: float = 10.0
    indices: tuple[int, ...] | None = None


def _eff_shape(shape: tuple[int, ...], transpose: bool) -> tuple[int, ...]:
    if transpose:
        if len(shape) != 2:
            raise ShapeMismatch(f"transpose flag on operand of shape {shape}")
        return (shape[1], shape[0])
    return shape


class CompGraph:
    """Append-only computation graph.  Builder methods return node ids."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.inputs: dict[str, int] = {}

    def copy(self) -> "CompGraph":
        g = CompGraph()
        g.nodes = list(self.nodes)
        g.inputs = dict(self.inputs)
        return g

    def shape(self, nid: int) -> tuple[int, ...]:
        return self.nodes[nid].shape

    def _push(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    # ---- builders -------------------------------------------------------

    def input(self, name: str, shape: Iterable[int]) -> int:
        if name in self.inputs:
            raise ShapeMismatch(f"duplicate input slot {name!r}")
        nid = self._push(Node("input", (), tuple(int(s) for s in shape), name=name))
        self.inputs[name] = nid
        return nid

    def const(self, value) -> int:
        arr = np.asarray(value, dtype=np.float64)
        return self._push(Node("const", (), arr.shape, value=arr))

    def _binary_broadcast(self, op: str, a: int, b: int) -> int:
        sa, sb = self.shape(a), self.shape(b)
        if sa == sb:
            out = sa
        elif sa == ():
            out = sb
        elif sb == ():
            out = sa
        else:
            raise ShapeMismatch(f"{op}: shapes {sa} and {sb}")
        return self._push(Node(op, (a, b), out))

    def add(self, a: int, b: int) -> int:
        return self._binary_broadcast("add", a, b)

    def mul(self, a: int, b: int) -> int:
        return self._binary_broadcast("mul", a, b)

    def matmul(self, a: int, b: int, ta: bool = False, tb: bool = False, outer: bool = False) -> int:
        sa, sb = self.shape(a), self.shape(b)
        if outer:
            if len(sa) != 1 or len(sb) != 1 or ta or tb:
                raise ShapeMismatch(f"outer product needs two vectors, got {sa} and {sb}")
            out = (sa[0], sb[0])
            return self._push(Node("matmul", (a, b), out, outer=True))
        ea, eb = _eff_shape(sa, ta), _eff_shape(sb, tb)
        if len(ea) == 2 and len(eb) == 2:
            if ea[1] != eb[0]:
                raise ShapeMismatch(f"matmul: {sa}(T={ta}) @ {sb}(T={tb})")
            out = (ea[0], eb[1])
        elif len(ea) == 2 and len(eb) == 1:
            if ea[1] != eb[0]:
                raise ShapeMismatch(f"matmul: {sa}(T={ta}) @ {sb}")
            out = (ea[0],)
        elif len(ea) == 1 and len(eb) == 2:
            if ea[0] != eb[0]:
                raise ShapeMismatch(f"matmul: {sa} @ {sb}(T={tb})")
            out = (eb[1],)
        elif len(ea) == 1 and len(eb) == 1:
            if ea[0] != eb[0]:
                raise ShapeMismatch(f"dot: {sa} . {sb}")
            out = ()
        else:
            raise ShapeMismatch(f"matmul: unsupported ranks {sa}, {sb}")
        return self._push(Node("matmul", (a, b), out, ta=ta, tb=tb))

    def tanh(self, a: int) -> int:
        return self._push(Node("tanh", (a,), self.shape(a)))

    def softplus(self, a: int, sharpness: float = 10.0) -> int:
        if sharpness <= 0:
            raise ShapeMismatch(f"softplus sharpness must be positive, got {sharpness}")
        return self._push(Node("softplus", (a,), self.shape(a), sharpness=float(sharpness)))

    def sum(self, a: int) -> int:
        return self._push(Node("sum", (a,), ()))

    def select(self, a: int, indices: Iterable[int]) -> int:
        idx = tuple(int(i) for i in indices)
        sa = self.shape(a)
        if len(sa) == 0:
            raise ShapeMismatch("select on a scalar")
        for i in idx:
            if not (0 <= i < sa[0]):
                raise ShapeMismatch(f"select index {i} out of range for {sa}")
        out = (len(idx),) + sa[1:]
        return self._push(Node("select", (a,), out, indices=idx))

    def concat(self, parts: Iterable[int]) -> int:
        ids = tuple(parts)
        if not ids:
            raise ShapeMismatch("concat of nothing")
        shapes = [self.shape(i) for i in ids]
        rest = shapes[0][1:]
        for s in shapes:
            if len(s) == 0 or s[1:] != rest:
                raise ShapeMismatch(f"concat: incompatible shapes {shapes}")
        out = (sum(s[0] for s in shapes),) + rest
        return self._push(Node("concat", ids, out))

    def affine(self, w: int, x: int, b: int) -> int:
        """w @ x + b; w is (out, in), x is (in,), b is (out,)."""
        return self.add(self.matmul(w, x), b)

    # ---- evaluation -----------------------------------------------------

    def _ancestors(self, target: int) -> set[int]:
        seen: set[int] = set()
        stack = [target]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(self.nodes[nid].args)
        return seen

    def evaluate(self, bindings: Mapping[str, Array], node: int | None = None) -> Array:
        """Evaluate one node (default: the last one) under the given input bindings."""
        if node is None:
            node = len(self.nodes) - 1
        bound: dict[str, Array] = {}
        for name, val in bindings.items():
            if name not in self.inputs:
                continue
            arr = np.asarray(val, dtype=np.float64)
            want = self.nodes[self.inputs[name]].shape
            if arr.shape != want:
                raise ShapeMismatch(f"input {name!r}: bound {arr.shape}, declared {want}")
            bound[name] = arr
        need = sorted(self._ancestors(node))
        vals: dict[int, Array] = {}
        for nid in need:
            n = self.nodes[nid]
            if n.op == "input":
                if n.name not in bound:
                    raise UnboundInput(f"input slot {n.name!r} not bound")
                vals[nid] = bound[n.name]
            elif n.op == "const":
                vals[nid] = n.value
            elif n.op == "add":
                vals[nid] = vals[n.args[0]] + vals[n.args[1]]
            elif n.op == "mul":
                vals[nid] = vals[n.args[0]] * vals[n.args[1]]
            elif n.op == "matmul":
                a, b = vals[n.args[0]], vals[n.args[1]]
                if n.outer:
                    vals[nid] = np.outer(a, b)
                else:
                    if n.ta:
                        a = a.T
                    if n.tb:
                        b = b.T
                    vals[nid] = a @ b
            elif n.op == "tanh":
                vals[nid] = np.tanh(vals[n.args[0]])
            elif n.op == "softplus":
                k = n.sharpness
                vals[nid] = np.logaddexp(0.0, k * vals[n.args[0]]) / k
            elif n.op == "sum":
                vals[nid] = np.asarray(np.sum(vals[n.args[0]]))
            elif n.op == "select":
                vals[nid] = vals[n.args[0]][list(n.indices)]
            elif n.op == "concat":
                vals[nid] = np.concatenate([vals[i] for i in n.args], axis=0)
            else:
                raise ShapeMismatch(f"unknown op {n.op!r}")
        return vals[node]


@dataclass
class GradResult:
    """A gradient expressed as a node in an extended copy of the source graph."""

    graph: CompGraph
    node: int
    structural_zero: bool


def _vjp(g: CompGraph, nid: int, gid: int) -> list[tuple[int, int]]:
    """Contributions (arg id, adjoint piece id) for one node, given its adjoint gid."""
    n = g.nodes[nid]
    out: list[tuple[int, int]] = []
    if n.op in ("input", "const"):
        return out
    if n.op == "add":
        for arg in n.args:
            if g.shape(arg) == n.shape:
                out.append((arg, gid))
            else:
                out.append((arg, g.sum(gid)))
    elif n.op == "mul":
        a, b = n.args
        for arg, other in ((a, b), (b, a)):
            piece = g.mul(gid, other)
            if g.shape(arg) == () and n.shape != ():
                piece = g.sum(piece)
            out.append((arg, piece))
    elif n.op == "matmul":
        a, b = n.args
        ra, rb = len(g.shape(a)), len(g.shape(b))
        if n.outer:
            out.append((a, g.matmul(gid, b)))
            out.append((b, g.matmul(gid, a, ta=True)))
        elif ra == 1 and rb == 1:
            out.append((a, g.mul(gid, b)))
            out.append((b, g.mul(gid, a)))
        elif ra == 2 and rb == 2:
            if not n.ta:
                out.append((a, g.matmul(gid, b, tb=not n.tb)))
            else:
                out.append((a, g.matmul(b, gid, ta=n.tb, tb=True)))
            if not n.tb:
                out.append((b, g.matmul(a, gid, ta=not n.ta)))
            else:
                out.append((b, g.matmul(gid, a, ta=True, tb=n.ta)))
        elif ra == 2 and rb == 1:
            if not n.ta:
                out.append((a, g.matmul(gid, b, outer=True)))
            else:
                out.append((a, g.matmul(b, gid, outer=True)))
            out.append((b, g.matmul(a, gid, ta=not n.ta)))
        else:  # vector @ matrix
            out.append((a, g.matmul(b, gid, ta=n.tb)))
            if not n.tb:
                out.append((b, g.matmul(a, gid, outer=True)))
            else:
                out.append((b, g.matmul(gid, a, outer=True)))
    elif n.op == "tanh":
        tt = g.mul(nid, nid)
        d = g.add(g.const(1.0), g.mul(g.const(-1.0), tt))
        out.append((n.args[0], g.mul(gid, d)))
    elif n.op == "softplus":
        # d/dx softplus_k(x) = sigmoid(kx) = 0.5 + 0.5 tanh(kx/2)
        t = g.tanh(g.mul(g.const(n.sharpness / 2.0), n.args[0]))
        sig = g.add(g.const(0.5), g.mul(g.const(0.5), t))
        out.append((n.args[0], g.mul(gid, sig)))
    elif n.op == "sum":
        src = n.args[0]
        out.append((src, g.mul(g.const(np.ones(g.shape(src))), gid)))
    elif n.op == "select":
        src = n.args[0]
        n0 = g.shape(src)[0]
        sel = np.zeros((len(n.indices), n0))
        for r, i in enumerate(n.indices):
            sel[r, i] = 1.0
        out.append((src, g.matmul(g.const(sel.T), gid)))
    elif n.op == "concat":
        off = 0
        for arg in n.args:
            length = g.shape(arg)[0]
            out.append((arg, g.select(gid, range(off, off + length))))
            off += length
    else:
        raise ShapeMismatch(f"unknown op {n.op!r}")
    return out


def build_gradient(
    graph: CompGraph,
    wrt: str,
    output: int | None = None,
    seed_output_index: int | None = None,
) -> GradResult:
    """Extend a copy of the graph with nodes computing d(output)/d(input wrt).

    A non-scalar output must name the component to differentiate via
    seed_output_index.  If the named input does not feed the output at all the
    gradient is a structural zero: a literal zero constant, flagged as such.
    """
    if wrt not in graph.inputs:
        raise UnboundInput(f"no input slot {wrt!r}")
    ext = graph.copy()
    out = output if output is not None else len(ext.nodes) - 1
    if ext.shape(out) != ():
        if seed_output_index is None:
            raise NonScalarOutputWithoutSeed(
                f"output shape {ext.shape(out)}; pick a component to differentiate"
            )
        out = ext.sum(ext.select(out, (seed_output_index,)))
    target = ext.inputs[wrt]
    relevant = ext._ancestors(out)
    if target not in relevant:
        zero = ext.const(np.zeros(ext.shape(target)))
        return GradResult(ext, zero, structural_zero=True)
    # restrict the backward sweep to nodes between the target and the output
    downstream: set[int] = set()
    for nid in sorted(relevant):
        if nid == target or any(a in downstream for a in ext.nodes[nid].args):
            downstream.add(nid)
    live = relevant & downstream
    adjoint: dict[int, int] = {out: ext.const(1.0)}
    for nid in sorted(live, reverse=True):
        if nid not in adjoint:
            continue
        for arg, piece in _vjp(ext, nid, adjoint[nid]):
            if arg not in live:
                continue
            if arg in adjoint:
                adjoint[arg] = ext.add(adjoint[arg], piece)
            else:
                adjoint[arg] = piece
    return GradResult(ext, adjoint[target], structural_zero=False)


def gradient(
    graph: CompGraph,
    bindings: Mapping[str, Array],
    wrt: str,
    output: int | None = None,
    seed_output_index: int | None = None,
) -> Array:
    """Evaluate d(output)/d(wrt) at the given bindings."""
    res = build_gradient(graph, wrt, output=output, seed_output_index=seed_output_index)
    return res.graph.evaluate(bindings, res.node)


def ops_used(graph: CompGraph) -> set[str]:
    return {n.op for n in graph.nodes}


def finite_difference_check(
    graph: CompGraph,
    bindings: Mapping[str, Array],
    wrt: str,
    output: int | None = None,
    seed_output_index: int | None = None,
    step: float = 1e-6,
) -> float:
    """Max relative error of the analytic gradient against central differences."""
    analytic = gradient(graph, bindings, wrt, output=output, seed_output_index=seed_output_index)
    out = output if output is not None else len(graph.nodes) - 1

    def f(x: Array) -> float:
        b = dict(bindings)
        b[wrt] = x
        val = graph.evaluate(b, out)
        if val.shape != ():
            if seed_output_index is None:
                raise NonScalarOutputWithoutSeed("scalarize the output for the check")
            val = val[seed_output_index]
        return float(val)

    x0 = np.asarray(bindings[wrt], dtype=np.float64)
    fd = np.zeros_like(x0)
    flat = fd.reshape(-1)
    xf = x0.reshape(-1)
    for i in range(xf.size):
        keep = xf[i]
        xf[i] = keep + step
        hi = f(x0)
        xf[i] = keep - step
        lo = f(x0)
        xf[i] = keep
        flat[i] = (hi - lo) / (2.0 * step)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(fd)))
    return float(np.max(np.abs(analytic - fd) / denom)) if fd.size else 0.0
