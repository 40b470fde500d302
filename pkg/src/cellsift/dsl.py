"""Closed predicate DSL for per-cell validation criteria.

A criterion is a boolean expression over the target cell (``value``) and the
other cells of its tuple (``attr("Name")``). The language is closed: no user
functions, no aggregation, no side effects. Evaluation is total — any runtime
coercion failure (e.g. ``num()`` of a non-numeric string) makes the enclosing
comparison or predicate false rather than raising, since an un-coercible value
is itself evidence of a violation.

Grammar (EBNF, the wire contract for generated criteria)::

    criterion  = or_expr ;
    or_expr    = and_expr , { "or" , and_expr } ;
    and_expr   = unary , { "and" , unary } ;
    unary      = "not" , unary | atom ;
    atom       = "(" , or_expr , ")" | comparison | predicate ;
    comparison = term , ( "==" | "!=" | "<" | "<=" | ">" | ">=" ) , term ;
    predicate  = "matches" , "(" , string , ")"
               | "len_between" , "(" , number , "," , number , ")"
               | "num_between" , "(" , number , "," , number , ")"
               | "in_set" , "(" , string , { "," , string } , ")"
               | "is_number" | "is_integer" | "not_empty" ;
    term       = "value" | "attr" , "(" , string , ")" | string | number
               | "num" , "(" , term , ")" | "len" , "(" , term , ")"
               | "lower" , "(" , term , ")" ;

Semantics notes: predicates test the target cell value; ``matches`` regexes
are implicitly anchored (full match); ordered comparisons always coerce both
sides to numbers; ``==``/``!=`` compare strings unless a side is numeric.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .table import Dataset

MAX_CRITERIA_PER_ATTR = 8

COMPARE_OPS = ("==", "!=", "<=", ">=", "<", ">")


class CriterionParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class ValueRef:
    pass


@dataclass(frozen=True)
class AttrRef:
    name: str


@dataclass(frozen=True)
class StrLit:
    value: str


@dataclass(frozen=True)
class NumLit:
    value: float


@dataclass(frozen=True)
class NumOf:
    term: "Term"


@dataclass(frozen=True)
class LenOf:
    term: "Term"


@dataclass(frozen=True)
class LowerOf:
    term: "Term"


Term = ValueRef | AttrRef | StrLit | NumLit | NumOf | LenOf | LowerOf


@dataclass(frozen=True)
class And:
    children: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Expr", ...]


@dataclass(frozen=True)
class Not:
    child: "Expr"


@dataclass(frozen=True)
class Compare:
    op: str
    left: Term
    right: Term


@dataclass(frozen=True)
class Matches:
    pattern: str


@dataclass(frozen=True)
class LenBetween:
    lo: float
    hi: float


@dataclass(frozen=True)
class NumBetween:
    lo: float
    hi: float


@dataclass(frozen=True)
class InSet:
    values: tuple[str, ...]


@dataclass(frozen=True)
class IsNumber:
    pass


@dataclass(frozen=True)
class IsInteger:
    pass


@dataclass(frozen=True)
class NotEmpty:
    pass


Expr = (
    And | Or | Not | Compare | Matches | LenBetween | NumBetween | InSet
    | IsNumber | IsInteger | NotEmpty
)

_PREDICATE_NAMES = {
    "matches", "len_between", "num_between", "in_set",
    "is_number", "is_integer", "not_empty",
}
_TERM_FUNCS = {"num", "len", "lower"}


# -- lexer ---------------------------------------------------------------------

_NUMBER_RE = re.compile(r"-?[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class _Token:
    kind: str  # ident | string | number | op | lparen | rparen | comma | end
    text: str
    value: object
    pos: int


def _lex(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch == '"':
            j = i + 1
            out: list[str] = []
            while j < n and src[j] != '"':
                if src[j] == "\\":
                    if j + 1 >= n or src[j + 1] not in _ESCAPES:
                        raise CriterionParseError("invalid escape in string", j)
                    out.append(_ESCAPES[src[j + 1]])
                    j += 2
                else:
                    out.append(src[j])
                    j += 1
            if j >= n:
                raise CriterionParseError("unterminated string", i)
            tokens.append(_Token("string", src[i : j + 1], "".join(out), i))
            i = j + 1
            continue
        if ch == "(":
            tokens.append(_Token("lparen", ch, None, i))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token("rparen", ch, None, i))
            i += 1
            continue
        if ch == ",":
            tokens.append(_Token("comma", ch, None, i))
            i += 1
            continue
        two = src[i : i + 2]
        if two in ("==", "!=", "<=", ">="):
            tokens.append(_Token("op", two, None, i))
            i += 2
            continue
        if ch in "<>":
            tokens.append(_Token("op", ch, None, i))
            i += 1
            continue
        m = _NUMBER_RE.match(src, i)
        if m and (ch.isdigit() or (ch == "-" and m.end() > i + 1)):
            x = float(m.group(0))
            if not math.isfinite(x):
                raise CriterionParseError("numeric literal overflows", i)
            tokens.append(_Token("number", m.group(0), x, i))
            i = m.end()
            continue
        m = _IDENT_RE.match(src, i)
        if m:
            tokens.append(_Token("ident", m.group(0), None, i))
            i = m.end()
            continue
        raise CriterionParseError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", "", None, n))
    return tokens


# -- parser --------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token], schema: tuple[str, ...]):
        self.tokens = tokens
        self.schema = set(schema)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            raise CriterionParseError(f"expected {want}, found {tok.text!r}", tok.pos)
        return tok

    def parse(self) -> Expr:
        expr = self.or_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise CriterionParseError(f"trailing input {tok.text!r}", tok.pos)
        return expr

    def or_expr(self) -> Expr:
        children = [self.and_expr()]
        while self.peek().kind == "ident" and self.peek().text == "or":
            self.next()
            children.append(self.and_expr())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def and_expr(self) -> Expr:
        children = [self.unary()]
        while self.peek().kind == "ident" and self.peek().text == "and":
            self.next()
            children.append(self.unary())
        return children[0] if len(children) == 1 else And(tuple(children))

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "not":
            self.next()
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "lparen":
            self.next()
            inner = self.or_expr()
            self.expect("rparen")
            return inner
        if tok.kind == "ident" and tok.text in _PREDICATE_NAMES:
            return self.predicate()
        left = self.term()
        op = self.next()
        if op.kind != "op":
            raise CriterionParseError(
                f"expected comparison operator, found {op.text!r}", op.pos
            )
        right = self.term()
        return Compare(op.text, left, right)

    def predicate(self) -> Expr:
        tok = self.next()
        name = tok.text
        if name == "is_number":
            return IsNumber()
        if name == "is_integer":
            return IsInteger()
        if name == "not_empty":
            return NotEmpty()
        self.expect("lparen")
        if name == "matches":
            pat = self.expect("string")
            self.expect("rparen")
            try:
                re.compile(pat.value)
            except re.error as exc:
                raise CriterionParseError(f"invalid regex: {exc}", pat.pos) from None
            return Matches(pat.value)
        if name in ("len_between", "num_between"):
            lo = self.expect("number")
            self.expect("comma")
            hi = self.expect("number")
            self.expect("rparen")
            cls = LenBetween if name == "len_between" else NumBetween
            return cls(float(lo.value), float(hi.value))
        # in_set
        values = [self.expect("string").value]
        while self.peek().kind == "comma":
            self.next()
            values.append(self.expect("string").value)
        self.expect("rparen")
        return InSet(tuple(values))

    def term(self) -> Term:
        tok = self.next()
        if tok.kind == "string":
            return StrLit(tok.value)
        if tok.kind == "number":
            return NumLit(float(tok.value))
        if tok.kind != "ident":
            raise CriterionParseError(f"expected a term, found {tok.text!r}", tok.pos)
        if tok.text == "value":
            return ValueRef()
        if tok.text == "attr":
            self.expect("lparen")
            name = self.expect("string")
            self.expect("rparen")
            if name.value not in self.schema:
                raise CriterionParseError(
                    f"unknown attribute {name.value!r}", name.pos
                )
            return AttrRef(name.value)
        if tok.text in _TERM_FUNCS:
            self.expect("lparen")
            inner = self.term()
            self.expect("rparen")
            return {"num": NumOf, "len": LenOf, "lower": LowerOf}[tok.text](inner)
        raise CriterionParseError(f"unknown name {tok.text!r}", tok.pos)


def parse_expr(text: str, schema: tuple[str, ...]) -> Expr:
    """Parse DSL source against a schema; the whole input must be consumed."""
    return _Parser(_lex(text), schema).parse()


# -- pretty printer -------------------------------------------------------------


def _escape(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{out}"'


def _num_text(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _term_text(t: Term) -> str:
    if isinstance(t, ValueRef):
        return "value"
    if isinstance(t, AttrRef):
        return f"attr({_escape(t.name)})"
    if isinstance(t, StrLit):
        return _escape(t.value)
    if isinstance(t, NumLit):
        return _num_text(t.value)
    if isinstance(t, NumOf):
        return f"num({_term_text(t.term)})"
    if isinstance(t, LenOf):
        return f"len({_term_text(t.term)})"
    return f"lower({_term_text(t.term)})"


def to_source(expr: Expr) -> str:
    """Canonical DSL text; parsing it back yields a structurally equal AST."""
    if isinstance(expr, Or):
        return " or ".join(
            f"({to_source(c)})" if isinstance(c, Or) else to_source(c)
            for c in expr.children
        )
    if isinstance(expr, And):
        return " and ".join(
            f"({to_source(c)})" if isinstance(c, (And, Or)) else to_source(c)
            for c in expr.children
        )
    if isinstance(expr, Not):
        inner = to_source(expr.child)
        if isinstance(expr.child, (And, Or)):
            inner = f"({inner})"
        return f"not {inner}"
    if isinstance(expr, Compare):
        return f"{_term_text(expr.left)} {expr.op} {_term_text(expr.right)}"
    if isinstance(expr, Matches):
        return f"matches({_escape(expr.pattern)})"
    if isinstance(expr, LenBetween):
        return f"len_between({_num_text(expr.lo)}, {_num_text(expr.hi)})"
    if isinstance(expr, NumBetween):
        return f"num_between({_num_text(expr.lo)}, {_num_text(expr.hi)})"
    if isinstance(expr, InSet):
        return f"in_set({', '.join(_escape(v) for v in expr.values)})"
    if isinstance(expr, IsNumber):
        return "is_number"
    if isinstance(expr, IsInteger):
        return "is_integer"
    return "not_empty"


# -- evaluation --------------------------------------------------------------


class _CoercionFailure(Exception):
    pass


def _num(x: object) -> float:
    if isinstance(x, (int, float)):
        return float(x)
    try:
        out = float(str(x).strip())
    except ValueError:
        raise _CoercionFailure() from None
    if not math.isfinite(out):
        raise _CoercionFailure()
    return out


_REGEX_CACHE: dict[str, re.Pattern] = {}


def _compiled(pattern: str) -> re.Pattern:
    rx = _REGEX_CACHE.get(pattern)
    if rx is None:
        rx = re.compile(pattern)
        _REGEX_CACHE[pattern] = rx
    return rx


class _CellScope:
    __slots__ = ("ds", "i", "target")

    def __init__(self, ds: Dataset, i: int, target: str):
        self.ds = ds
        self.i = i
        self.target = target

    def attr_value(self, name: str) -> str:
        return self.ds.cell(self.i, self.ds.attr_index(name))


def _eval_term(t: Term, scope: _CellScope) -> object:
    if isinstance(t, ValueRef):
        return scope.target
    if isinstance(t, AttrRef):
        return scope.attr_value(t.name)
    if isinstance(t, StrLit):
        return t.value
    if isinstance(t, NumLit):
        return t.value
    if isinstance(t, NumOf):
        return _num(_eval_term(t.term, scope))
    if isinstance(t, LenOf):
        inner = _eval_term(t.term, scope)
        return len(str(inner)) if not isinstance(inner, float) else len(_num_text(inner))
    inner = _eval_term(t.term, scope)
    return str(inner).lower()


def _eval_compare(node: Compare, scope: _CellScope) -> bool:
    try:
        left = _eval_term(node.left, scope)
        right = _eval_term(node.right, scope)
        if node.op in ("==", "!="):
            if isinstance(left, str) and isinstance(right, str):
                eq = left == right
            else:
                eq = _num(left) == _num(right)
            return eq if node.op == "==" else not eq
        a, b = _num(left), _num(right)
    except _CoercionFailure:
        return False
    if node.op == "<":
        return a < b
    if node.op == "<=":
        return a <= b
    if node.op == ">":
        return a > b
    return a >= b


def _eval_expr(expr: Expr, scope: _CellScope) -> bool:
    if isinstance(expr, And):
        return all(_eval_expr(c, scope) for c in expr.children)
    if isinstance(expr, Or):
        return any(_eval_expr(c, scope) for c in expr.children)
    if isinstance(expr, Not):
        return not _eval_expr(expr.child, scope)
    if isinstance(expr, Compare):
        return _eval_compare(expr, scope)
    v = scope.target
    try:
        if isinstance(expr, Matches):
            return _compiled(expr.pattern).fullmatch(v) is not None
        if isinstance(expr, LenBetween):
            return expr.lo <= len(v) <= expr.hi
        if isinstance(expr, NumBetween):
            return expr.lo <= _num(v) <= expr.hi
        if isinstance(expr, InSet):
            return v in expr.values
        if isinstance(expr, IsNumber):
            _num(v)
            return True
        if isinstance(expr, IsInteger):
            int(v.strip() or "x")
            return True
        return v != ""  # NotEmpty
    except (_CoercionFailure, ValueError):
        return False


# -- criterion objects ----------------------------------------------------------


@dataclass(frozen=True)
class CriterionSource:
    attr: str
    name: str
    description: str
    expr_text: str
    origin: str  # initial | refined

    def __post_init__(self) -> None:
        if not self.expr_text:
            raise ValueError("criterion expression must be non-empty")
        if self.origin not in ("initial", "refined"):
            raise ValueError(f"bad origin {self.origin!r}")


@dataclass(frozen=True)
class Criterion:
    source: CriterionSource
    ast: Expr

    @property
    def name(self) -> str:
        return self.source.name


@dataclass(frozen=True)
class CriterionSet:
    attr: str
    criteria: tuple[Criterion, ...]

    def __len__(self) -> int:
        return len(self.criteria)

    def __iter__(self):
        return iter(self.criteria)


@dataclass(frozen=True)
class VerificationStats:
    criterion_name: str
    accuracy_on_right: float
    evaluated_count: int


def parse_criterion(src: CriterionSource, schema: tuple[str, ...]) -> Criterion:
    """Parse one criterion; raises CriterionParseError on any defect."""
    return Criterion(src, parse_expr(src.expr_text, schema))


def evaluate_criterion(
    crit: Criterion | Expr,
    ds: Dataset,
    i: int,
    j: int,
    override_value: str | None = None,
) -> bool:
    """True when the cell passes the check. Total: never raises on data."""
    ast = crit.ast if isinstance(crit, Criterion) else crit
    target = ds.cell(i, j) if override_value is None else override_value
    return _eval_expr(ast, _CellScope(ds, i, target))


def criteria_feature_vector(
    ds: Dataset, i: int, j: int, cset: CriterionSet, override_value: str | None = None
) -> np.ndarray:
    """One pass/fail bit per criterion, in set order."""
    return np.array(
        [
            1.0 if evaluate_criterion(c, ds, i, j, override_value) else 0.0
            for c in cset
        ],
        dtype=np.float64,
    )


def criteria_bits_matrix(ds: Dataset, j: int, cset: CriterionSet) -> np.ndarray:
    """All rows of attribute j against the attribute's criterion set."""
    out = np.zeros((ds.n_rows, len(cset)), dtype=np.float64)
    for t, crit in enumerate(cset):
        for i in range(ds.n_rows):
            if evaluate_criterion(crit, ds, i, j):
                out[i, t] = 1.0
    return out


def criterion_accuracy(
    crit: Criterion, ds: Dataset, cells: list[tuple[int, int]]
) -> VerificationStats:
    """Fraction of the given right-labeled cells on which the criterion passes."""
    if not cells:
        raise ValueError("criterion accuracy needs at least one cell")
    passed = sum(1 for i, j in cells if evaluate_criterion(crit, ds, i, j))
    return VerificationStats(crit.name, passed / len(cells), len(cells))


def pass_rate(ds: Dataset, i: int, j: int, cset: CriterionSet) -> float:
    """Fraction of the attribute's criteria that the cell passes."""
    if len(cset) == 0:
        raise ValueError("pass rate over an empty criterion set")
    bits = criteria_feature_vector(ds, i, j, cset)
    return float(bits.mean())


# -- persistence -----------------------------------------------------------------


def criteria_to_json(sets: dict[str, CriterionSet]) -> list[dict]:
    out = []
    for attr in sorted(sets):
        for c in sets[attr]:
            out.append(
                {
                    "attr": c.source.attr,
                    "name": c.source.name,
                    "description": c.source.description,
                    "expr": c.source.expr_text,
                    "origin": c.source.origin,
                }
            )
    return out


def criteria_from_json(
    records: list[dict], schema: tuple[str, ...]
) -> dict[str, CriterionSet]:
    by_attr: dict[str, list[Criterion]] = {}
    for rec in records:
        src = CriterionSource(
            rec["attr"], rec["name"], rec.get("description", ""),
            rec["expr"], rec.get("origin", "initial"),
        )
        by_attr.setdefault(src.attr, []).append(parse_criterion(src, schema))
    return {attr: CriterionSet(attr, tuple(crits)) for attr, crits in by_attr.items()}


def save_criteria(sets: dict[str, CriterionSet], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(criteria_to_json(sets), indent=2, sort_keys=True), encoding="utf-8"
    )


def load_criteria(path: str | Path, schema: tuple[str, ...]) -> dict[str, CriterionSet]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    return criteria_from_json(records, schema)
