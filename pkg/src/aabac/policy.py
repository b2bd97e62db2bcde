"""Attribute-policy language: parse, print, evaluate, compile.

Grammar (keywords case-insensitive, operands case-sensitive):

    or-expr  := and-expr ("or" and-expr)*
    and-expr := primary ("and" primary)*
    primary  := "(" or-expr ")" | leaf
    leaf     := NAME (("=" VALUE) | (CMP INTEGER-OR-DATE))?

NAME and VALUE are runs of words, so multi-word operands like
"John Smith" or "Main Project" need no quoting; interior whitespace
canonicalizes to single spaces. A bare NAME is a flag leaf. Dates in
MM/DD/YYYY form become days-since-1970-01-01 integers at parse time
(proleptic Gregorian) and print back as dates.

Compilation produces a threshold tree (and -> n-of-n, or -> 1-of-n) with
every numeric comparison expanded into a bag-of-bits subtree over leaves
"name.bit_j=0|1", so a key holding the bit attributes of value v
satisfies the subtree exactly when the comparison holds for v.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from .errors import EmptyPolicy, PolicySyntaxError, WidthOverflow

DEFAULT_WIDTH = 32

_DATE_RE = re.compile(r"^(\d{2})/(\d{2})/(\d{4})$")
_INT_RE = re.compile(r"^\d+$")
_EPOCH_DAY = datetime.date(1970, 1, 1)


def days_from_date(month: int, day: int, year: int) -> int:
    return (datetime.date(year, month, day) - _EPOCH_DAY).days


def date_from_days(days: int) -> str:
    d = _EPOCH_DAY + datetime.timedelta(days=days)
    return f"{d.month:02d}/{d.day:02d}/{d.year:04d}"


# ---------------------------------------------------------------------------
# Attributes
# ---------------------------------------------------------------------------

_INT_MARK_RE = re.compile(r"^(.*):int(\d*)$")


@dataclass(frozen=True)
class Attribute:
    """One named credential: a string token or a width-bounded integer.

    Canonical text is "name=value" for strings, "name:int=value" for
    32-bit integers, and "name:int<w>=value" for other widths; parsing
    the canonical form reproduces the attribute exactly.
    """

    name: str
    value: Union[str, int]
    width: int = DEFAULT_WIDTH

    def __post_init__(self):
        _check_token(self.name, "attribute name")
        if ":" in self.name:
            raise ValueError(f"attribute name may not contain ':': {self.name!r}")
        if isinstance(self.value, str):
            _check_token(self.value, "attribute value")
        else:
            if self.width < 1:
                raise ValueError("width must be >= 1")
            if not 0 <= self.value < (1 << self.width):
                raise WidthOverflow(
                    f"{self.name}={self.value} does not fit in {self.width} bits")

    @classmethod
    def tag(cls, name: str) -> "Attribute":
        """Plain tag attribute, the bare-token style: stored as name=True."""
        return cls(name=name, value="True")

    @classmethod
    def integer(cls, name: str, value: int, width: int = DEFAULT_WIDTH) -> "Attribute":
        return cls(name=name, value=value, width=width)

    @property
    def is_int(self) -> bool:
        return isinstance(self.value, int)

    def canonical(self) -> str:
        if self.is_int:
            mark = ":int" if self.width == DEFAULT_WIDTH else f":int{self.width}"
            return f"{self.name}{mark}={self.value}"
        return f"{self.name}={self.value}"

    @classmethod
    def parse(cls, text: str) -> "Attribute":
        if "=" not in text:
            raise ValueError(f"not a canonical attribute: {text!r}")
        left, right = text.split("=", 1)
        m = _INT_MARK_RE.match(left)
        if m and _INT_RE.match(right):
            width = int(m.group(2)) if m.group(2) else DEFAULT_WIDTH
            return cls(name=m.group(1), value=int(right), width=width)
        return cls(name=left, value=right)


def _check_token(text: str, what: str) -> None:
    if not text:
        raise ValueError(f"{what} must be nonempty")
    if "/" in text or "=" in text:
        raise ValueError(f"{what} may not contain '/' or '=': {text!r}")


class AttributeSet:
    """Immutable set of attributes with at most one value per name."""

    __slots__ = ("_by_name",)

    def __init__(self, attrs: Iterable[Attribute] = ()):
        by_name: dict[str, Attribute] = {}
        for a in attrs:
            existing = by_name.get(a.name)
            if existing is not None and existing != a:
                raise ValueError(f"conflicting values for attribute {a.name!r}")
            by_name[a.name] = a
        object.__setattr__(self, "_by_name", by_name)

    def get(self, name: str) -> Attribute | None:
        return self._by_name.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self) -> Iterator[Attribute]:
        return iter(sorted(self._by_name.values(), key=lambda a: a.canonical()))

    def __len__(self) -> int:
        return len(self._by_name)

    def __eq__(self, other) -> bool:
        return isinstance(other, AttributeSet) and self._by_name == other._by_name

    def __hash__(self) -> int:
        return hash(frozenset(self.canonical_strings()))

    def __repr__(self) -> str:
        return f"AttributeSet({{{', '.join(self.canonical_strings())}}})"

    def canonical_strings(self) -> list[str]:
        return sorted(a.canonical() for a in self._by_name.values())

    def union(self, other: Iterable[Attribute]) -> "AttributeSet":
        return AttributeSet(list(self._by_name.values()) + list(other))

    @classmethod
    def parse_all(cls, texts: Iterable[str]) -> "AttributeSet":
        return cls(Attribute.parse(t) for t in texts)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

CMP_OPS = ("<", "<=", ">", ">=")


@dataclass(frozen=True)
class LeafEq:
    name: str
    value: str


@dataclass(frozen=True)
class LeafFlag:
    name: str


@dataclass(frozen=True)
class LeafCmp:
    name: str
    op: str
    bound: int
    is_date: bool = False

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class And:
    children: tuple["PolicyAst", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And needs >= 2 children")


@dataclass(frozen=True)
class Or:
    children: tuple["PolicyAst", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or needs >= 2 children")


PolicyAst = Union[And, Or, LeafEq, LeafFlag, LeafCmp]


def policy_attribute_names(ast: PolicyAst) -> set[str]:
    """All attribute names a policy references."""
    if isinstance(ast, (And, Or)):
        out: set[str] = set()
        for c in ast.children:
            out |= policy_attribute_names(c)
        return out
    return {ast.name}


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_SYMBOLS = ("<=", ">=", "<", ">", "=", "(", ")")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'word', 'and', 'or', '(', ')', '=', '<', '<=', '>', '>=', 'end'
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        matched = False
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(_Token(sym, sym, i))
                i += len(sym)
                matched = True
                break
        if matched:
            continue
        start = i
        while i < n and not text[i].isspace() and text[i] not in "()=<>":
            i += 1
        word = text[start:i]
        kind = word.lower() if word.lower() in ("and", "or") else "word"
        tokens.append(_Token(kind, word, start))
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self._tokens = _tokenize(text)
        self._i = 0

    def _peek(self) -> _Token:
        return self._tokens[self._i]

    def _next(self) -> _Token:
        tok = self._tokens[self._i]
        self._i += 1
        return tok

    def _expect(self, kind: str) -> _Token:
        tok = self._peek()
        if tok.kind != kind:
            raise PolicySyntaxError(tok.pos, f"{kind!r}, found {tok.text!r}")
        return self._next()

    def parse(self) -> PolicyAst:
        ast = self._or_expr()
        tail = self._peek()
        if tail.kind != "end":
            raise PolicySyntaxError(tail.pos, f"end of policy, found {tail.text!r}")
        return ast

    def _or_expr(self) -> PolicyAst:
        children = [self._and_expr()]
        while self._peek().kind == "or":
            self._next()
            children.append(self._and_expr())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def _and_expr(self) -> PolicyAst:
        children = [self._primary()]
        while self._peek().kind == "and":
            self._next()
            children.append(self._primary())
        return children[0] if len(children) == 1 else And(tuple(children))

    def _primary(self) -> PolicyAst:
        tok = self._peek()
        if tok.kind == "(":
            self._next()
            inner = self._or_expr()
            self._expect(")")
            return inner
        return self._leaf()

    def _words(self, what: str) -> str:
        # one or more non-keyword words, joined by single spaces
        tok = self._peek()
        if tok.kind != "word":
            raise PolicySyntaxError(tok.pos, f"{what}, found {tok.text!r}")
        parts = [self._next().text]
        while self._peek().kind == "word":
            parts.append(self._next().text)
        return " ".join(parts)

    def _leaf(self) -> PolicyAst:
        name = self._words("a name")
        tok = self._peek()
        if tok.kind == "=":
            self._next()
            value = self._words("a value")
            return LeafEq(name, value)
        if tok.kind in CMP_OPS:
            op = self._next().kind
            bound_tok = self._peek()
            bound = self._words("an integer or MM/DD/YYYY date")
            m = _DATE_RE.match(bound)
            if m:
                month, day, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
                try:
                    days = days_from_date(month, day, year)
                except ValueError:
                    raise PolicySyntaxError(bound_tok.pos, f"a valid date, found {bound!r}")
                return LeafCmp(name, op, days, is_date=True)
            if _INT_RE.match(bound):
                return LeafCmp(name, op, int(bound))
            raise PolicySyntaxError(
                bound_tok.pos, f"an integer or MM/DD/YYYY date, found {bound!r}")
        return LeafFlag(name)


def parse_policy(text: str) -> PolicyAst:
    if not text or not text.strip():
        raise EmptyPolicy("blank policy text")
    return _Parser(text).parse()


def print_policy(ast: PolicyAst) -> str:
    """Canonical text; parse_policy(print_policy(a)) is structurally a."""
    if isinstance(ast, LeafEq):
        return f"{ast.name} = {ast.value}"
    if isinstance(ast, LeafFlag):
        return ast.name
    if isinstance(ast, LeafCmp):
        bound = date_from_days(ast.bound) if ast.is_date else str(ast.bound)
        return f"{ast.name} {ast.op} {bound}"
    joiner = " and " if isinstance(ast, And) else " or "
    parts = []
    for child in ast.children:
        text = print_policy(child)
        if isinstance(child, (And, Or)):
            text = f"({text})"
        parts.append(text)
    return joiner.join(parts)


# ---------------------------------------------------------------------------
# Evaluation (the ground-truth oracle for the ABE engine)
# ---------------------------------------------------------------------------

def evaluate(ast: PolicyAst, attrs: AttributeSet) -> bool:
    """Boolean satisfaction; absent or type-mismatched attributes are false."""
    if isinstance(ast, And):
        return all(evaluate(c, attrs) for c in ast.children)
    if isinstance(ast, Or):
        return any(evaluate(c, attrs) for c in ast.children)
    a = attrs.get(ast.name)
    if isinstance(ast, LeafEq):
        return a is not None and not a.is_int and a.value == ast.value
    if isinstance(ast, LeafFlag):
        return a is not None and not a.is_int and a.value == "True"
    # LeafCmp
    if a is None or not a.is_int:
        return False
    v = a.value
    return {"<": v < ast.bound, "<=": v <= ast.bound,
            ">": v > ast.bound, ">=": v >= ast.bound}[ast.op]


# ---------------------------------------------------------------------------
# Threshold trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeLeaf:
    index: int
    attr: str  # canonical attribute string


@dataclass(frozen=True)
class TreeNode:
    index: int
    threshold: int
    children: tuple["PolicyTree", ...]

    def __post_init__(self):
        if not 1 <= self.threshold <= len(self.children):
            raise ValueError("threshold out of range")


PolicyTree = Union[TreeNode, TreeLeaf]


def tree_leaves(tree: PolicyTree) -> list[TreeLeaf]:
    if isinstance(tree, TreeLeaf):
        return [tree]
    out: list[TreeLeaf] = []
    for c in tree.children:
        out.extend(tree_leaves(c))
    return out


def tree_satisfied(tree: PolicyTree, held: set[str]) -> bool:
    """Threshold satisfaction: a leaf iff its canonical string is held,
    a node iff at least `threshold` children are satisfied."""
    if isinstance(tree, TreeLeaf):
        return tree.attr in held
    hits = sum(1 for c in tree.children if tree_satisfied(c, held))
    return hits >= tree.threshold


# Unindexed build nodes; indices are assigned in one preorder pass at the end.
_TRUE = "true"
_FALSE = "false"


def _bit_leaf(name: str, j: int, bit: int):
    return ("leaf", f"{name}.bit_{j}={bit}")


def _gate(threshold_kind: str, a, b):
    # threshold_kind: 'and' | 'or'; collapses true/false operands
    if threshold_kind == "and":
        if a is _FALSE or b is _FALSE:
            return _FALSE
        if a is _TRUE:
            return b
        if b is _TRUE:
            return a
    else:
        if a is _TRUE or b is _TRUE:
            return _TRUE
        if a is _FALSE:
            return b
        if b is _FALSE:
            return a
    return (threshold_kind, (a, b))


def _expand_cmp(name: str, op: str, bound: int, width: int):
    """Bag-of-bits expansion; returns a build node, _TRUE, or _FALSE."""
    if bound >= (1 << width):
        raise WidthOverflow(f"bound {bound} does not fit in {width} bits for {name!r}")
    if bound < 0:
        # every held value is >= 0 > bound
        acc = _TRUE if op in (">", ">=") else _FALSE
    else:
        acc = _TRUE if op in ("<=", ">=") else _FALSE  # result at "all bits equal"
        for j in range(width):  # LSB upward, so acc covers lower bits
            n_j = (bound >> j) & 1
            if op in (">", ">="):
                if n_j == 1:
                    acc = _gate("and", _bit_leaf(name, j, 1), acc)
                else:
                    acc = _gate("or", _bit_leaf(name, j, 1), acc)
            else:
                if n_j == 1:
                    acc = _gate("or", _bit_leaf(name, j, 0), acc)
                else:
                    acc = _gate("and", _bit_leaf(name, j, 0), acc)
    if acc is _TRUE:
        # tautology within the width: any key holding the attribute's bits
        msb = width - 1
        return ("or", (_bit_leaf(name, msb, 0), _bit_leaf(name, msb, 1)))
    if acc is _FALSE:
        # unsatisfiable: no materialized key holds both bit values
        msb = width - 1
        return ("and", (_bit_leaf(name, msb, 0), _bit_leaf(name, msb, 1)))
    return acc


def _build(ast: PolicyAst, widths: Mapping[str, int]):
    if isinstance(ast, And):
        return ("andn", tuple(_build(c, widths) for c in ast.children))
    if isinstance(ast, Or):
        return ("orn", tuple(_build(c, widths) for c in ast.children))
    if isinstance(ast, LeafEq):
        return ("leaf", f"{ast.name}={ast.value}")
    if isinstance(ast, LeafFlag):
        return ("leaf", f"{ast.name}=True")
    width = widths.get(ast.name, DEFAULT_WIDTH)
    return _expand_cmp(ast.name, ast.op, ast.bound, width)


def _index(build, counter: list[int]) -> PolicyTree:
    idx = counter[0]
    counter[0] += 1
    kind, payload = build
    if kind == "leaf":
        return TreeLeaf(index=idx, attr=payload)
    children = tuple(_index(c, counter) for c in payload)
    threshold = 1 if kind in ("or", "orn") else len(children)
    return TreeNode(index=idx, threshold=threshold, children=children)


def compile_policy(ast: PolicyAst, widths: Mapping[str, int] | None = None) -> PolicyTree:
    """Compile to a threshold tree: and -> n-of-n, or -> 1-of-n, numeric
    comparisons expanded to bag-of-bits subtrees. Node indices are
    deterministic preorder."""
    build = _build(ast, widths or {})
    return _index(build, [0])


def materialize_numeric(name: str, value: int, width: int = DEFAULT_WIDTH) -> AttributeSet:
    """The key-side counterpart of bag-of-bits: the integer attribute plus
    one bit attribute per position (bit j = coefficient of 2^j)."""
    attrs = [Attribute.integer(name, value, width)]
    for j in range(width):
        attrs.append(Attribute(f"{name}.bit_{j}", str((value >> j) & 1)))
    return AttributeSet(attrs)


def materialize_all(attrs: AttributeSet) -> AttributeSet:
    """Expand every integer attribute in the set into its bit attributes."""
    out: list[Attribute] = []
    for a in attrs:
        if a.is_int:
            out.extend(materialize_numeric(a.name, a.value, a.width))
        else:
            out.append(a)
    return AttributeSet(out)
