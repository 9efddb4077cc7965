"""Tape-based reverse-mode automatic differentiation over scalar f64 values.

Every primitive operation appends one node (at most two parents, with the
local partial derivatives frozen at record time) to a growing tape, so a
single reverse sweep from the output recovers d(output)/d(leaf) for every
leaf.  Leaves that never feed the output keep an adjoint of exactly 0.0;
that bitwise zero is the criticality criterion used by the analyzer, so no
epsilon thresholds appear anywhere in this module.
"""

from __future__ import annotations

import math
from array import array

_NO_PARENT = -1

_PAIR_OPS = frozenset({"add", "sub", "mul", "div", "max"})
_UNARY_OPS = frozenset({"neg", "sqrt", "exp", "ln"})


class DomainError(ValueError):
    """Operand outside an op's domain (div by zero, sqrt/ln of non-positive)."""


class UnknownNode(KeyError):
    """A node id that does not exist on the tape it was used with."""


def max_partials(x: float, y: float) -> tuple[float, float]:
    """Local partials of max(x, y); ties resolve toward the first argument."""
    return (1.0, 0.0) if x >= y else (0.0, 1.0)


class Tape:
    """Append-only record of primitive ops, columnar for compact storage.

    Node ids are dense and increase in execution (topological) order; a
    node's parents always carry smaller ids.  Tapes are single-use: record
    a computation, run `gradient`, throw the tape away.
    """

    __slots__ = ("_n", "_p0", "_p1", "_w0", "_w1",
                 "_ap0", "_ap1", "_aw0", "_aw1")

    def __init__(self) -> None:
        self._n = 0
        self._p0 = array("q")
        self._p1 = array("q")
        self._w0 = array("d")
        self._w1 = array("d")
        # bound-method caches; recording is the hot path of the analyzer
        self._ap0 = self._p0.append
        self._ap1 = self._p1.append
        self._aw0 = self._w0.append
        self._aw1 = self._w1.append

    def __len__(self) -> int:
        return self._n

    @property
    def next_id(self) -> int:
        return self._n

    def _rec(self, p0: int, p1: int, w0: float, w1: float) -> int:
        i = self._n
        self._n = i + 1
        self._ap0(p0)
        self._ap1(p1)
        self._aw0(w0)
        self._aw1(w1)
        return i

    def leaf(self, value: float) -> "DualRef":
        """Register an independent input; its adjoint is what gradient reports."""
        return DualRef(self, value, self._rec(_NO_PARENT, _NO_PARENT, 0.0, 0.0))


class DualRef:
    """Handle to one tape node: the primal value plus the node id."""

    __slots__ = ("_t", "value", "node")

    def __init__(self, tape: Tape, value: float, node: int) -> None:
        self._t = tape
        self.value = value
        self.node = node

    def __repr__(self) -> str:  # pragma: no cover
        return f"DualRef({self.value!r}, node={self.node})"

    # -- arithmetic; a plain-number operand is a constant coefficient, not a leaf

    def __add__(self, o):
        t = self._t
        if type(o) is DualRef:
            return DualRef(t, self.value + o.value,
                           t._rec(self.node, o.node, 1.0, 1.0))
        return DualRef(t, self.value + o, t._rec(self.node, _NO_PARENT, 1.0, 0.0))

    __radd__ = __add__

    def __sub__(self, o):
        t = self._t
        if type(o) is DualRef:
            return DualRef(t, self.value - o.value,
                           t._rec(self.node, o.node, 1.0, -1.0))
        return DualRef(t, self.value - o, t._rec(self.node, _NO_PARENT, 1.0, 0.0))

    def __rsub__(self, o):
        t = self._t
        return DualRef(t, o - self.value, t._rec(self.node, _NO_PARENT, -1.0, 0.0))

    def __mul__(self, o):
        t = self._t
        if type(o) is DualRef:
            return DualRef(t, self.value * o.value,
                           t._rec(self.node, o.node, o.value, self.value))
        return DualRef(t, self.value * o, t._rec(self.node, _NO_PARENT, o, 0.0))

    __rmul__ = __mul__

    def __truediv__(self, o):
        t = self._t
        x = self.value
        if type(o) is DualRef:
            y = o.value
            if y == 0.0:
                raise DomainError("division by zero")
            return DualRef(t, x / y,
                           t._rec(self.node, o.node, 1.0 / y, -x / (y * y)))
        if o == 0.0:
            raise DomainError("division by zero")
        return DualRef(t, x / o, t._rec(self.node, _NO_PARENT, 1.0 / o, 0.0))

    def __rtruediv__(self, o):
        t = self._t
        x = self.value
        if x == 0.0:
            raise DomainError("division by zero")
        return DualRef(t, o / x,
                       t._rec(self.node, _NO_PARENT, -o / (x * x), 0.0))

    def __neg__(self):
        t = self._t
        return DualRef(t, -self.value, t._rec(self.node, _NO_PARENT, -1.0, 0.0))

    # -- unary transcendentals

    def sqrt(self):
        x = self.value
        if x <= 0.0:
            raise DomainError(f"sqrt of non-positive value {x!r}")
        t = self._t
        r = math.sqrt(x)
        return DualRef(t, r, t._rec(self.node, _NO_PARENT, 0.5 / r, 0.0))

    def exp(self):
        t = self._t
        r = math.exp(self.value)
        return DualRef(t, r, t._rec(self.node, _NO_PARENT, r, 0.0))

    def ln(self):
        x = self.value
        if x <= 0.0:
            raise DomainError(f"ln of non-positive value {x!r}")
        t = self._t
        return DualRef(t, math.log(x), t._rec(self.node, _NO_PARENT, 1.0 / x, 0.0))

    def powi(self, n: int):
        x = self.value
        t = self._t
        if n == 0:
            return DualRef(t, 1.0, t._rec(self.node, _NO_PARENT, 0.0, 0.0))
        if n < 0 and x == 0.0:
            raise DomainError("powi of 0.0 with a negative exponent")
        return DualRef(t, x ** n,
                       t._rec(self.node, _NO_PARENT, n * (x ** (n - 1)), 0.0))

    def fmax(self, o: "DualRef"):
        t = self._t
        px, py = max_partials(self.value, o.value)
        return DualRef(t, self.value if px == 1.0 else o.value,
                       t._rec(self.node, o.node, px, py))


def new_leaf(tape: Tape, value: float) -> DualRef:
    """Create a leaf node holding `value` and return its ref."""
    return tape.leaf(value)


def apply(tape: Tape, op: str, args) -> DualRef:
    """Record one primitive op by name.

    Binary ops accept (DualRef, DualRef) or a DualRef mixed with a plain
    number; unary ops take a single DualRef; powi takes (DualRef, int).
    """
    if op in _PAIR_OPS:
        x, y = args
        if op == "max":
            if type(x) is DualRef and type(y) is DualRef:
                return x.fmax(y)
            # against a constant the losing side contributes no node
            if type(x) is DualRef:
                px, _ = max_partials(x.value, y)
                return DualRef(tape, x.value if px == 1.0 else y,
                               tape._rec(x.node, _NO_PARENT, px, 0.0))
            _, py = max_partials(x, y.value)
            return DualRef(tape, y.value if py == 1.0 else x,
                           tape._rec(y.node, _NO_PARENT, py, 0.0))
        if type(x) is not DualRef:
            # constant-first forms route through the reflected operators
            return {"add": y.__radd__, "sub": y.__rsub__,
                    "mul": y.__rmul__, "div": y.__rtruediv__}[op](x)
        return {"add": x.__add__, "sub": x.__sub__,
                "mul": x.__mul__, "div": x.__truediv__}[op](y)
    if op in _UNARY_OPS:
        (x,) = args
        return {"neg": x.__neg__, "sqrt": x.sqrt,
                "exp": x.exp, "ln": x.ln}[op]()
    if op == "powi":
        x, n = args
        return x.powi(n)
    raise ValueError(f"unknown op {op!r}")


def gradient(tape: Tape, output: DualRef, leaves) -> list[float]:
    """Reverse sweep: d(output)/d(leaf) for every id in `leaves`.

    The output adjoint is seeded to exactly 1.0 and propagation visits node
    ids in strictly descending order, each exactly once, so repeated calls
    on a frozen tape are bitwise identical.  Leaves the output never
    depends on come back as exact 0.0.
    """
    n = tape._n
    out = output.node
    for lid in leaves:
        if not 0 <= lid < n:
            raise UnknownNode(f"node {lid} is not on this tape (size {n})")
    adj = [0.0] * (out + 1)
    adj[out] = 1.0
    p0 = tape._p0
    p1 = tape._p1
    w0 = tape._w0
    w1 = tape._w1
    for i in range(out, -1, -1):
        a = adj[i]
        if a == 0.0:
            continue
        j = p0[i]
        if j >= 0:
            adj[j] += a * w0[i]
            k = p1[i]
            if k >= 0:
                adj[k] += a * w1[i]
    return [adj[lid] if lid <= out else 0.0 for lid in leaves]
