"""Syntax trees for equations: parsing, printing, evaluation, subtree surgery.

Every :class:`Expression` hangs its body below a synthetic ``Y`` root.  Nodes
are addressed by integer ids assigned in breadth-first order with the ``Y``
node as id 0.  Within a level, siblings are visited in the order they are
written in infix notation, so the base of a power comes before its exponent
even though the exponent is stored as child 0.
"""

from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CannotReplaceRoot,
    EquationSyntaxError,
    NodeNotFound,
    UnknownSymbol,
    VariableOutOfRange,
)

__all__ = [
    "NodeKind",
    "Node",
    "Expression",
    "EvalCounter",
    "const",
    "var",
    "parse_expression",
    "print_expression",
    "evaluate",
    "count_operators",
    "replace_subtree",
]


class NodeKind(enum.Enum):
    PLUS = "+"
    MINUS = "-"
    PRODUCT = "*"
    DIVISION = "/"
    POWER = "^"
    LOGARITHM = "ln"
    EXPONENTIAL = "exp"
    SINE = "sin"
    COSINE = "cos"
    SQUARE_ROOT = "sqrt"
    CONSTANT = "const"
    VARIABLE = "var"
    Y = "Y"

    @property
    def arity(self) -> int:
        return _ARITY[self]

    @property
    def is_operator(self) -> bool:
        return self not in (NodeKind.CONSTANT, NodeKind.VARIABLE, NodeKind.Y)


_ARITY = {
    NodeKind.PLUS: 2,
    NodeKind.MINUS: 2,
    NodeKind.PRODUCT: 2,
    NodeKind.DIVISION: 2,
    NodeKind.POWER: 2,
    NodeKind.LOGARITHM: 1,
    NodeKind.EXPONENTIAL: 1,
    NodeKind.SINE: 1,
    NodeKind.COSINE: 1,
    NodeKind.SQUARE_ROOT: 1,
    NodeKind.CONSTANT: 0,
    NodeKind.VARIABLE: 0,
    NodeKind.Y: 1,
}

BINARY_OPERATORS = (
    NodeKind.PLUS,
    NodeKind.MINUS,
    NodeKind.PRODUCT,
    NodeKind.DIVISION,
    NodeKind.POWER,
)
UNARY_OPERATORS = (
    NodeKind.LOGARITHM,
    NodeKind.EXPONENTIAL,
    NodeKind.SINE,
    NodeKind.COSINE,
    NodeKind.SQUARE_ROOT,
)
OPERATORS = BINARY_OPERATORS + UNARY_OPERATORS

FUNCTION_NAMES = {k.value: k for k in UNARY_OPERATORS}


@dataclass(frozen=True)
class Node:
    """Immutable tree node.

    ``value`` holds the float of a constant or the column index of a
    variable and is ``None`` for operators.  For ``POWER`` the node computes
    ``children[1] ** children[0]``.
    """

    kind: NodeKind
    children: tuple = ()
    value: float | int | None = None

    def __post_init__(self):
        if len(self.children) != self.kind.arity:
            raise ValueError(
                f"{self.kind.name} takes {self.kind.arity} children, "
                f"got {len(self.children)}"
            )

    def display_order(self) -> Sequence[int]:
        """Child indices in the order they appear in infix notation."""
        if self.kind is NodeKind.POWER:
            return (1, 0)
        return range(len(self.children))

    def iter_nodes(self):
        yield self
        for child in self.children:
            yield from child.iter_nodes()

    def depth(self) -> int:
        if not self.children:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


def const(value: float) -> Node:
    return Node(NodeKind.CONSTANT, (), float(value))


def var(index: int) -> Node:
    if index < 0:
        raise ValueError("variable index must be non-negative")
    return Node(NodeKind.VARIABLE, (), int(index))


def op(kind: NodeKind, *children: Node) -> Node:
    return Node(kind, tuple(children))


def power(base: Node, exponent: Node) -> Node:
    """Build ``base ^ exponent`` with the exponent stored as child 0."""
    return Node(NodeKind.POWER, (exponent, base))


class Expression:
    """An equation body below a ``Y`` root, with BFS node ids.

    Instances are immutable; structural edits return new expressions.
    """

    __slots__ = ("body", "_nodes", "_parent", "_children", "_depth", "_hash")

    def __init__(self, body: Node):
        if isinstance(body, Expression):
            body = body.body
        if body.kind is NodeKind.Y:
            body = body.children[0]
        self.body = body
        root = Node(NodeKind.Y, (body,))
        nodes = [root]
        parent = [None]
        children = [None]
        depth = [0]
        queue = deque([0])
        while queue:
            nid = queue.popleft()
            node = nodes[nid]
            ids = [None] * len(node.children)
            for pos in node.display_order():
                cid = len(nodes)
                nodes.append(node.children[pos])
                parent.append(nid)
                children.append(None)
                depth.append(depth[nid] + 1)
                ids[pos] = cid
                queue.append(cid)
            children[nid] = tuple(ids)
        self._nodes = tuple(nodes)
        self._parent = tuple(parent)
        self._children = tuple(children)
        self._depth = tuple(depth)
        self._hash = None

    root = 0

    # -- lookup ---------------------------------------------------------
    def __len__(self):
        return len(self._nodes)

    def _check(self, nid):
        if not isinstance(nid, (int, np.integer)) or not 0 <= nid < len(self._nodes):
            raise NodeNotFound(f"node {nid!r} does not exist in {self}")
        return int(nid)

    def node(self, nid: int) -> Node:
        return self._nodes[self._check(nid)]

    def kind(self, nid: int) -> NodeKind:
        return self.node(nid).kind

    def parent(self, nid: int) -> int | None:
        return self._parent[self._check(nid)]

    def children(self, nid: int) -> tuple:
        """Child ids indexed by child position (child 0 first)."""
        return self._children[self._check(nid)]

    def depth(self, nid: int) -> int:
        return self._depth[self._check(nid)]

    def position(self, nid: int) -> int:
        """Which child of its parent ``nid`` is (0 or 1)."""
        p = self.parent(nid)
        if p is None:
            raise CannotReplaceRoot("the Y node has no parent")
        return self._children[p].index(nid)

    def ancestors(self, nid: int) -> list[int]:
        """Ids from the parent of ``nid`` up to and including the Y root."""
        out = []
        p = self.parent(nid)
        while p is not None:
            out.append(p)
            p = self._parent[p]
        return out

    def node_ids(self) -> range:
        return range(len(self._nodes))

    @property
    def body_id(self) -> int:
        return 1

    def subtree(self, nid: int) -> "Expression":
        node = self.node(nid)
        if node.kind is NodeKind.Y:
            return self
        return Expression(node)

    # -- summaries ------------------------------------------------------
    @property
    def n_operators(self) -> int:
        return sum(1 for n in self._nodes[1:] if n.kind.is_operator)

    @property
    def has_operator(self) -> bool:
        return self.body.kind.is_operator

    @property
    def max_depth(self) -> int:
        """Edges from the body root to its deepest leaf."""
        return self.body.depth()

    def variables(self) -> set[int]:
        return {n.value for n in self._nodes if n.kind is NodeKind.VARIABLE}

    def constants(self) -> list[int]:
        """Ids of constant nodes in BFS order."""
        return [i for i, n in enumerate(self._nodes) if n.kind is NodeKind.CONSTANT]

    def with_constants(self, values: Iterable[float]) -> "Expression":
        """Return a copy whose constants (in BFS order) take ``values``."""
        values = [float(v) for v in values]
        ids = self.constants()
        if len(values) != len(ids):
            raise ValueError(f"expected {len(ids)} constants, got {len(values)}")
        lookup = dict(zip(ids, values))
        return Expression(self._rebuild(1, lookup))

    def _rebuild(self, nid, lookup):
        node = self._nodes[nid]
        if nid in lookup:
            return const(lookup[nid])
        if not node.children:
            return node
        return Node(node.kind, tuple(self._rebuild(c, lookup) for c in self._children[nid]))

    # -- dunder ---------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Expression):
            return NotImplemented
        return self.body == other.body

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.body)
        return self._hash

    def __str__(self):
        return print_expression(self)

    def __repr__(self):
        return f"Expression({print_expression(self)!r})"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^()])"
    r")"
)
_VARIABLE = re.compile(r"x(\d+)\Z")


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos
            while bad < len(text) and text[bad].isspace():
                bad += 1
            raise EquationSyntaxError(
                f"unexpected character {text[bad]!r}", bad,
                ("number", "variable", "function", "operator"), text,
            )
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := factor (('*'|'/') factor)*
    # factor := '-' factor | power
    # power  := atom ('^' factor)?
    # atom   := number | x<k> | func '(' expr ')' | '(' expr ')'

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, offset=0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            self.fail(tok, (repr(value),))
        return tok

    def fail(self, tok, expected):
        found = "end of input" if tok[0] == "end" else repr(tok[1])
        raise EquationSyntaxError(f"unexpected {found}", tok[2], expected, self.text)

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(tok, ("operator", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "sym":
            kind = NodeKind.PLUS if self.take()[1] == "+" else NodeKind.MINUS
            node = op(kind, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "sym":
            kind = NodeKind.PRODUCT if self.take()[1] == "*" else NodeKind.DIVISION
            node = op(kind, node, self.factor())
        return node

    def factor(self):
        tok = self.peek()
        if tok[0] == "sym" and tok[1] == "-":
            self.take()
            nxt, after = self.peek(), self.peek(1)
            # a minus glued to a literal is a negative constant unless '^' follows
            if nxt[0] == "num" and after[1] != "^":
                self.take()
                return const(-float(nxt[1]))
            return op(NodeKind.MINUS, const(0.0), self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "sym" and self.peek()[1] == "^":
            self.take()
            return power(base, self.factor())
        return base

    def atom(self):
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return const(float(text))
        if kind == "name":
            m = _VARIABLE.match(text)
            if m:
                return var(int(m.group(1)))
            if text in FUNCTION_NAMES:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return op(FUNCTION_NAMES[text], arg)
            raise UnknownSymbol(
                f"unknown symbol {text!r}", pos,
                ("x<k>",) + tuple(FUNCTION_NAMES), self.text,
            )
        if kind == "sym" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(tok, ("number", "variable", "function", "'('"))


def parse_expression(text: str) -> Expression:
    """Parse an infix equation string into an :class:`Expression`.

    >>> str(parse_expression("sin(x0)*x0 + ln(x1^2)"))
    'sin(x0) * x0 + ln(x1 ^ 2)'
    """
    if not isinstance(text, str):
        raise TypeError("equation must be a string")
    return Expression(_Parser(text).parse())


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {
    NodeKind.PLUS: 1,
    NodeKind.MINUS: 1,
    NodeKind.PRODUCT: 2,
    NodeKind.DIVISION: 2,
    NodeKind.POWER: 4,
}


def format_constant(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _prec(node):
    return _PREC.get(node.kind, 5)


def _fmt(node: Node) -> str:
    kind = node.kind
    if kind is NodeKind.CONSTANT:
        return format_constant(node.value)
    if kind is NodeKind.VARIABLE:
        return f"x{node.value}"
    if kind in FUNCTION_NAMES.values():
        return f"{kind.value}({_fmt(node.children[0])})"
    if kind is NodeKind.POWER:
        exponent, base = node.children
        b = _fmt(base)
        negative_const = base.kind is NodeKind.CONSTANT and b.startswith("-")
        if _prec(base) <= 4 or negative_const:
            b = f"({b})"
        e = _fmt(exponent)
        if _prec(exponent) < 4:
            e = f"({e})"
        return f"{b} ^ {e}"
    left, right = node.children
    p = _PREC[kind]
    lhs = _fmt(left)
    if _prec(left) < p:
        lhs = f"({lhs})"
    rhs = _fmt(right)
    if _prec(right) <= p:
        rhs = f"({rhs})"
    return f"{lhs} {kind.value} {rhs}"


def print_expression(expr: Expression | Node) -> str:
    """Canonical infix form with minimal parentheses."""
    node = expr.body if isinstance(expr, Expression) else expr
    if node.kind is NodeKind.Y:
        node = node.children[0]
    return _fmt(node)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class EvalCounter:
    """Counts forward evaluations of individual nodes."""

    def __init__(self):
        self.count = 0
        self.per_node = {}

    def hit(self, nid):
        self.count += 1
        self.per_node[nid] = self.per_node.get(nid, 0) + 1


_BINARY = {
    NodeKind.PLUS: np.add,
    NodeKind.MINUS: np.subtract,
    NodeKind.PRODUCT: np.multiply,
    NodeKind.DIVISION: np.divide,
}
_UNARY = {
    NodeKind.LOGARITHM: np.log,
    NodeKind.EXPONENTIAL: np.exp,
    NodeKind.SINE: np.sin,
    NodeKind.COSINE: np.cos,
    NodeKind.SQUARE_ROOT: np.sqrt,
}


def apply_operator(kind: NodeKind, args: Sequence[np.ndarray]) -> np.ndarray:
    """Forward semantics of one operator; callers silence FP warnings."""
    if kind in _BINARY:
        return _BINARY[kind](args[0], args[1])
    if kind is NodeKind.POWER:
        return np.power(args[1], args[0])
    return _UNARY[kind](args[0])


def _design_matrix(data):
    X = getattr(data, "X", data)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def check_variables(expr: Expression, n_columns: int):
    used = expr.variables()
    if used and max(used) >= n_columns:
        raise VariableOutOfRange(
            f"{expr} uses x{max(used)} but the data has {n_columns} "
            f"independent variable(s)"
        )


def evaluate_node(expr, nid, X, overrides=None, counter=None):
    """Forward-evaluate the subtree rooted at ``nid``.

    ``overrides`` maps node ids to per-row arrays that replace the output
    of those subtrees; overridden subtrees are not descended into.
    """
    if overrides and nid in overrides:
        return np.asarray(overrides[nid], dtype=float)
    if counter is not None:
        counter.hit(nid)
    node = expr._nodes[nid]
    kind = node.kind
    if kind is NodeKind.CONSTANT:
        return np.full(X.shape[0], node.value)
    if kind is NodeKind.VARIABLE:
        return X[:, node.value].astype(float, copy=True)
    args = [evaluate_node(expr, c, X, overrides, counter) for c in expr._children[nid]]
    if kind is NodeKind.Y:
        return args[0]
    return apply_operator(kind, args)


def evaluate(expr: Expression, data, overrides=None, counter=None) -> np.ndarray:
    """Evaluate ``expr`` row-wise; domain violations give nan/inf, never raise.

    ``data`` is a :class:`~redeq.data.Dataset` or an ``(m, k)`` array of
    independent variables.
    """
    X = _design_matrix(data)
    check_variables(expr, X.shape[1])
    with np.errstate(all="ignore"):
        return evaluate_node(expr, 0, X, overrides, counter)


def count_operators(expr: Expression) -> int:
    return expr.n_operators


def replace_subtree(tree: Expression, node: int, subtree) -> Expression:
    """Return a new tree with the subtree at ``node`` swapped for ``subtree``.

    ``subtree`` may be an :class:`Expression` (its Y root is dropped) or a
    bare :class:`Node`.
    """
    nid = tree._check(node)
    if nid == 0:
        raise CannotReplaceRoot("the Y node cannot be replaced")
    new = subtree.body if isinstance(subtree, Expression) else subtree
    if new.kind is NodeKind.Y:
        new = new.children[0]
    path = []
    cur = nid
    while cur != 0:
        p = tree._parent[cur]
        path.append(tree._children[p].index(cur))
        cur = p
    path.reverse()
    return Expression(_splice(tree.body, path[1:], new))


def _splice(node, path, new):
    if not path:
        return new
    pos = path[0]
    kids = list(node.children)
    kids[pos] = _splice(kids[pos], path[1:], new)
    return Node(node.kind, tuple(kids), node.value)
