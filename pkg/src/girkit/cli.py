"""Command-line driver: surface-syntax parser, DOT/JSON serialization of
annotated graphs, and the `gir` subcommands (check, mnf, graph, opt,
schedule, run, fuzz).

Exit codes: 0 on success, 1 on a reported diagnostic, 2 on internal errors.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import dataclass
from typing import Optional

from .core import (
    App, Assign, BaseTy, Cst, Deref, DepMap, FunTy,
    GirError, GLet, GName, HARD, JsonSchemaError, Lam, Let, LOC, Name,
    NameSupply, NApp, NAssign, NCst, NDeref, NLam, NRef, Nm, OMEGA,
    ParseError, Qualifier, QualifiedType, RefNew, RefTy, RuntimeConfig, RW,
    RwEffect, Span, Store, TY_ALLOC, TY_BOOL, TY_INT, TY_UNIT, Term,
    UNIT_V, VAR, const_text, effect_to_text, graph_to_text, initial_store,
    qt_to_text,
)
from .typecheck import infer_direct
from .mnf import to_mnf
from .graphir import erase, synthesize_config
from .interp import canonical_value, eval_direct, eval_graph, eval_store
from .optimize import RULES, optimize
from .schedule import (
    MATCHERS, emit, flatten_config, schedule, synthetic_graph, time_schedule,
)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    """A user-facing report tied to a byte range of one input file."""

    file: str
    start: int
    end: int
    code: str
    message: str

    def render(self) -> str:
        return f"{self.file}:{self.start}-{self.end}: [{self.code}] " \
               f"{self.message}"


def diagnostic_of(err: GirError, file: str) -> Diagnostic:
    span = err.span if isinstance(err.span, Span) else None
    start = span.start if span else 0
    end = span.end if span else 0
    return Diagnostic(file, start, end, err.code, err.message)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|=>|[(){}\[\],^!:=])
""", re.VERBOSE)

_KEYWORDS = {"let", "in", "fun", "ref", "unit", "true", "false",
             "rd", "wr", "if", "then", "else"}


@dataclass(frozen=True)
class Token:
    kind: str   # "int" | "ident" | "kw" | an operator literal | "eof"
    text: str
    start: int
    end: int


def tokenize(src: str) -> list:
    out = []
    pos = 0
    n = len(src)
    while pos < n:
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}",
                             span=Span(pos, pos + 1))
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        text = m.group()
        if m.lastgroup == "int":
            kind = "int"
        elif m.lastgroup == "ident":
            kind = "kw" if text in _KEYWORDS else "ident"
        else:
            kind = text
        out.append(Token(kind, text, m.start(), m.end()))
    out.append(Token("eof", "", n, n))
    return out


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_SUFFIX_RE = re.compile(r"_\d+$")


class _Parser:
    """Recursive-descent parser for the surface syntax:

        t ::= unit | true | false | <int> | <ident>
            | fun (x: TY^{q}) =>{rd{q} wr{q}} t
            | t t | ref(t, t) | !t | t := t | let x = t in t | (t)
        TY ::= Unit | Bool | Int | Alloc | Ref[B]
            | ((x: TY^{q}) =>{rd{q} wr{q}} TY^{q})

    Binders are α-renamed to fresh names; the free identifier `w` denotes
    the store's allocation capability.
    """

    def __init__(self, src: str, store: Store, supply: NameSupply):
        self.toks = tokenize(src)
        self.i = 0
        self.store = store
        self.supply = supply
        self.env: dict = {"w": store.w}

    # -- token plumbing ----------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str, what: str = "") -> Token:
        t = self.peek()
        if t.kind != kind:
            want = what or kind
            found = t.text or "end of input"
            raise ParseError(f"expected {want}, found {found!r}",
                             span=Span(t.start, t.end))
        return self.next()

    def expect_kw(self, word: str) -> Token:
        t = self.peek()
        if t.kind != "kw" or t.text != word:
            raise ParseError(f"expected {word!r}, found "
                             f"{t.text or 'end of input'!r}",
                             span=Span(t.start, t.end))
        return self.next()

    # -- binders / identifiers ---------------------------------------------

    def fresh(self, text: str) -> Name:
        base = _SUFFIX_RE.sub("", text) or "x"
        return self.supply.var(base)

    def lookup(self, tok: Token) -> Name:
        n = self.env.get(tok.text)
        if n is None:
            raise ParseError(f"unbound identifier {tok.text!r}",
                             span=Span(tok.start, tok.end))
        return n

    # -- grammar -----------------------------------------------------------

    def parse(self) -> Term:
        t = self.term()
        tk = self.peek()
        if tk.kind != "eof":
            raise ParseError(f"trailing input at {tk.text!r}",
                             span=Span(tk.start, tk.end))
        return t

    def term(self) -> Term:
        tk = self.peek()
        if tk.kind == "kw" and tk.text == "let":
            return self.let()
        if tk.kind == "kw" and tk.text == "fun":
            return self.lam()
        return self.assign()

    def let(self) -> Term:
        start = self.expect_kw("let").start
        ident = self.expect("ident", "a binder")
        self.expect("=")
        bound = self.term()
        self.expect_kw("in")
        var = self.fresh(ident.text)
        saved = self.env.get(ident.text)
        self.env[ident.text] = var
        body = self.term()
        if saved is None:
            del self.env[ident.text]
        else:
            self.env[ident.text] = saved
        return Let(var, bound, body, span=Span(start, self.peek().start))

    def lam(self) -> Term:
        start = self.expect_kw("fun").start
        self.expect("(")
        ident = self.expect("ident", "a parameter")
        self.expect(":")
        param = self.fresh(ident.text)
        saved = self.env.get(ident.text)
        self.env[ident.text] = param
        qt = self.qualified_type()
        self.expect(")")
        self.expect("=>")
        latent = self.effect()
        body = self.term()
        if saved is None:
            del self.env[ident.text]
        else:
            self.env[ident.text] = saved
        return Lam(param, qt, latent, body,
                   span=Span(start, self.peek().start))

    def assign(self) -> Term:
        lhs = self.app()
        if self.peek().kind == ":=":
            tok = self.next()
            rhs = self.app()
            return Assign(lhs, rhs, span=Span(tok.start, tok.end))
        return lhs

    def app(self) -> Term:
        t = self.atom()
        while self._starts_atom(self.peek()):
            arg = self.atom()
            t = App(t, arg)
        return t

    @staticmethod
    def _starts_atom(tk: Token) -> bool:
        if tk.kind in ("int", "ident", "(", "!"):
            return True
        return tk.kind == "kw" and tk.text in ("unit", "true", "false",
                                               "ref")

    def atom(self) -> Term:
        tk = self.peek()
        if tk.kind == "int":
            self.next()
            return Cst(int(tk.text), span=Span(tk.start, tk.end))
        if tk.kind == "kw" and tk.text in ("unit", "true", "false"):
            self.next()
            value = {"unit": UNIT_V, "true": True, "false": False}[tk.text]
            return Cst(value, span=Span(tk.start, tk.end))
        if tk.kind == "kw" and tk.text == "ref":
            self.next()
            self.expect("(")
            cap = self.term()
            self.expect(",")
            init = self.term()
            self.expect(")")
            return RefNew(cap, init, span=Span(tk.start, self.peek().start))
        if tk.kind == "!":
            self.next()
            inner = self.atom()
            return Deref(inner, span=Span(tk.start, tk.end))
        if tk.kind == "ident":
            self.next()
            return Nm(self.lookup(tk), span=Span(tk.start, tk.end))
        if tk.kind == "(":
            self.next()
            t = self.term()
            self.expect(")", "a closing parenthesis")
            return t
        raise ParseError(f"expected a term, found "
                         f"{tk.text or 'end of input'!r}",
                         span=Span(tk.start, tk.end))

    # -- types, qualifiers, effects ----------------------------------------

    def qualifier(self) -> Qualifier:
        self.expect("{")
        names = []
        if self.peek().kind != "}":
            names.append(self.lookup(self.expect("ident", "a name")))
            while self.peek().kind == ",":
                self.next()
                names.append(self.lookup(self.expect("ident", "a name")))
        self.expect("}")
        return Qualifier(frozenset(names))

    def effect(self) -> RwEffect:
        self.expect("{")
        self.expect_kw("rd")
        rd = self.qualifier()
        self.expect_kw("wr")
        wr = self.qualifier()
        self.expect("}")
        return RwEffect(rd, wr)

    def qualified_type(self):
        ty = self.type_()
        self.expect("^")
        q = self.qualifier()
        return QualifiedType(ty, q)

    def type_(self):
        tk = self.peek()
        if tk.kind == "ident":
            if tk.text in ("Unit", "Bool", "Int", "Alloc"):
                self.next()
                return {"Unit": TY_UNIT, "Bool": TY_BOOL, "Int": TY_INT,
                        "Alloc": TY_ALLOC}[tk.text]
            if tk.text == "Ref":
                self.next()
                self.expect("[")
                base = self.expect("ident", "a base type")
                if base.text not in ("Unit", "Bool", "Int"):
                    raise ParseError(
                        f"references hold base values, got {base.text!r}",
                        span=Span(base.start, base.end))
                self.expect("]")
                return RefTy({"Unit": TY_UNIT, "Bool": TY_BOOL,
                              "Int": TY_INT}[base.text])
        if tk.kind == "(":
            # ((x: TY^{q}) =>{rd{q} wr{q}} TY^{q})
            self.next()
            self.expect("(")
            ident = self.expect("ident", "a parameter")
            self.expect(":")
            param = self.fresh(ident.text)
            saved = self.env.get(ident.text)
            self.env[ident.text] = param
            pqt = self.qualified_type()
            self.expect(")")
            self.expect("=>")
            latent = self.effect()
            rqt = self.qualified_type()
            self.expect(")")
            if saved is None:
                del self.env[ident.text]
            else:
                self.env[ident.text] = saved
            return FunTy(param, pqt, latent, rqt)
        raise ParseError(f"expected a type, found "
                         f"{tk.text or 'end of input'!r}",
                         span=Span(tk.start, tk.end))


def parse(text: str, store: Optional[Store] = None,
          supply: Optional[NameSupply] = None) -> Term:
    """Parse surface syntax into a term; binders are freshly α-renamed and
    the free identifier `w` denotes the store's allocation capability."""
    store = store if store is not None else initial_store()
    supply = supply if supply is not None else store.supply
    return _Parser(text, store, supply).parse()


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def _node_label(b) -> str:
    if isinstance(b, NCst):
        return const_text(b.value)
    if isinstance(b, NLam):
        return f"fun {b.param.pretty()}"
    if isinstance(b, NApp):
        return f"{b.fn.pretty()} {b.arg.pretty()}"
    if isinstance(b, NRef):
        return f"ref({b.cap.pretty()}, {b.init.pretty()})"
    if isinstance(b, NDeref):
        return f"!{b.ref.pretty()}"
    if isinstance(b, NAssign):
        return f"{b.ref.pretty()} := {b.value.pretty()}"
    if isinstance(b, GName):
        return b.name.pretty()
    return "block"


def _operands(b) -> tuple:
    if isinstance(b, NApp):
        return (b.fn, b.arg)
    if isinstance(b, NRef):
        return (b.cap, b.init)
    if isinstance(b, NDeref):
        return (b.ref,)
    if isinstance(b, NAssign):
        return (b.ref, b.value)
    if isinstance(b, GName):
        return (b.name,)
    return ()


def export_dot(g, dep: Optional[DepMap] = None, title: str = "G") -> str:
    """Render an annotated graph term as one DOT digraph: solid edges are
    data dependencies, dashed are hard effect dependencies, dotted soft."""
    lines = [f"digraph {title} {{", "  rankdir=BT;"]
    seen: set = set()

    def node_id(n: Name) -> str:
        return f'"{n.pretty()}"'

    def walk(g):
        while isinstance(g, GLet):
            b = g.binding
            lines.append(f"  {node_id(g.var)} "
                         f"[label=\"{g.var.pretty()} := {_node_label(b)}\"];")
            seen.add(g.var)
            for m in _operands(b):
                lines.append(f"  {node_id(g.var)} -> {node_id(m)};")
            d = g.dep
            if d is not None:
                for k in sorted(d.hard):
                    lines.append(f"  {node_id(g.var)} -> "
                                 f"{node_id(d.hard[k])} [style=dashed];")
                for k in sorted(d.soft):
                    for t in sorted(d.soft[k]):
                        lines.append(f"  {node_id(g.var)} -> "
                                     f"{node_id(t)} [style=dotted];")
            if isinstance(b, NLam):
                walk(b.body)
            elif isinstance(b, GLet):
                walk(b)
            g = g.body
        if isinstance(g, GName):
            lines.append(f"  {node_id(g.name)} [peripheries=2];")

    walk(g)
    if dep is not None:
        for k in sorted(dep.hard):
            lines.append(f"  \"result\" -> \"{dep.hard[k].pretty()}\" "
                         f"[style=dashed];")
        for k in sorted(dep.soft):
            for t in sorted(dep.soft[k]):
                lines.append(f"  \"result\" -> \"{t.pretty()}\" "
                             f"[style=dotted];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# JSON export / import (lossless)
# ---------------------------------------------------------------------------

_FORMAT = "gir-graph"
_VERSION = 1


def _name_str(n: Name) -> str:
    kind = "l" if n.kind == LOC else "v"
    return f"{kind}{n.id}:{n.text}"


_NAME_STR_RE = re.compile(r"^([lv])(\d+):(.*)$")


def _name_of(s) -> Name:
    if not isinstance(s, str):
        raise JsonSchemaError(f"name must be a string, got {s!r}")
    m = _NAME_STR_RE.match(s)
    if not m:
        raise JsonSchemaError(f"malformed name {s!r}")
    kind = LOC if m.group(1) == "l" else VAR
    return Name(kind, int(m.group(2)), m.group(3))


def _names_json(names) -> list:
    return [_name_str(n) for n in sorted(names)]


def _qual_json(q: Qualifier) -> list:
    return _names_json(q.members)


def _qual_of(v) -> Qualifier:
    if not isinstance(v, list):
        raise JsonSchemaError(f"qualifier must be a list, got {v!r}")
    return Qualifier(frozenset(_name_of(s) for s in v))


def _eff_json(e: RwEffect) -> dict:
    return {"rd": _qual_json(e.reads), "wr": _qual_json(e.writes)}


def _eff_of(v) -> RwEffect:
    if not isinstance(v, dict) or set(v) != {"rd", "wr"}:
        raise JsonSchemaError(f"effect must have rd/wr, got {v!r}")
    return RwEffect(_qual_of(v["rd"]), _qual_of(v["wr"]))


def _ty_json(ty) -> object:
    if isinstance(ty, BaseTy):
        return ty.name
    if isinstance(ty, RefTy):
        return {"ref": ty.payload.name}
    if isinstance(ty, FunTy):
        return {"fun": {"param": _name_str(ty.param),
                        "paramQt": _qt_json(ty.param_qt),
                        "latent": _eff_json(ty.latent),
                        "resultQt": _qt_json(ty.result_qt)}}
    raise JsonSchemaError(f"unserializable type {ty!r}")


_BASE = {"Unit": TY_UNIT, "Bool": TY_BOOL, "Int": TY_INT, "Alloc": TY_ALLOC}


def _ty_of(v):
    if isinstance(v, str):
        if v not in _BASE:
            raise JsonSchemaError(f"unknown base type {v!r}")
        return _BASE[v]
    if isinstance(v, dict) and set(v) == {"ref"}:
        p = v["ref"]
        if p not in ("Unit", "Bool", "Int"):
            raise JsonSchemaError(f"bad reference payload {p!r}")
        return RefTy(_BASE[p])
    if isinstance(v, dict) and set(v) == {"fun"}:
        f = v["fun"]
        try:
            return FunTy(_name_of(f["param"]), _qt_of(f["paramQt"]),
                         _eff_of(f["latent"]), _qt_of(f["resultQt"]))
        except (KeyError, TypeError) as e:
            raise JsonSchemaError(f"malformed function type: {e}")
    raise JsonSchemaError(f"unknown type encoding {v!r}")


def _qt_json(qt: QualifiedType) -> dict:
    return {"ty": _ty_json(qt.ty), "qual": _qual_json(qt.qual)}


def _qt_of(v) -> QualifiedType:
    if not isinstance(v, dict) or set(v) != {"ty", "qual"}:
        raise JsonSchemaError(f"qualified type must have ty/qual, got {v!r}")
    return QualifiedType(_ty_of(v["ty"]), _qual_of(v["qual"]))


def _dep_json(d: Optional[DepMap]):
    if d is None:
        return None
    return {"hard": {_name_str(k): _name_str(d.hard[k])
                     for k in sorted(d.hard)},
            "soft": {_name_str(k): _names_json(d.soft[k])
                     for k in sorted(d.soft)}}


def _dep_of(v) -> Optional[DepMap]:
    if v is None:
        return None
    if not isinstance(v, dict) or set(v) != {"hard", "soft"}:
        raise JsonSchemaError(f"dep map must have hard/soft, got {v!r}")
    hard = {_name_of(k): _name_of(t) for k, t in v["hard"].items()}
    soft = {_name_of(k): frozenset(_name_of(t) for t in ts)
            for k, ts in v["soft"].items()}
    return DepMap.make(hard, soft)


def _value_json(value) -> list:
    if value is UNIT_V:
        return ["Unit"]
    if value is OMEGA:
        return ["Alloc"]
    if isinstance(value, bool):
        return ["Bool", value]
    if isinstance(value, int):
        return ["Int", value]
    raise JsonSchemaError(f"unserializable constant {value!r}")


def _value_of(v):
    if not isinstance(v, list) or not v:
        raise JsonSchemaError(f"malformed constant {v!r}")
    if v[0] == "Unit":
        return UNIT_V
    if v[0] == "Alloc":
        return OMEGA
    if v[0] == "Bool" and len(v) == 2 and isinstance(v[1], bool):
        return v[1]
    if v[0] == "Int" and len(v) == 2 and isinstance(v[1], int):
        return v[1]
    raise JsonSchemaError(f"malformed constant {v!r}")


def _exp_json(b) -> dict:
    if isinstance(b, NCst):
        return {"op": "cst", "value": _value_json(b.value)}
    if isinstance(b, NLam):
        out = {"op": "lam", "param": _name_str(b.param),
               "paramQt": _qt_json(b.param_qt),
               "latent": _eff_json(b.latent),
               "body": _graph_json(b.body)}
        if b.body_dep is not None:
            out["bodyDep"] = _dep_json(b.body_dep)
        return out
    if isinstance(b, NApp):
        return {"op": "app", "args": [_name_str(b.fn), _name_str(b.arg)]}
    if isinstance(b, NRef):
        return {"op": "ref", "args": [_name_str(b.cap), _name_str(b.init)]}
    if isinstance(b, NDeref):
        return {"op": "deref", "args": [_name_str(b.ref)]}
    if isinstance(b, NAssign):
        return {"op": "assign",
                "args": [_name_str(b.ref), _name_str(b.value)]}
    if isinstance(b, GName):
        return {"op": "name", "args": [_name_str(b.name)]}
    if isinstance(b, GLet):
        return {"op": "block", "graph": _graph_json(b)}
    raise JsonSchemaError(f"unserializable binding {b!r}")


def _args_of(v, n: int) -> list:
    args = v.get("args")
    if not isinstance(args, list) or len(args) != n:
        raise JsonSchemaError(f"op {v.get('op')!r} needs {n} args, "
                              f"got {args!r}")
    return [_name_of(a) for a in args]


def _exp_of(v):
    if not isinstance(v, dict) or "op" not in v:
        raise JsonSchemaError(f"malformed node {v!r}")
    op = v["op"]
    if op == "cst":
        return NCst(_value_of(v.get("value")))
    if op == "lam":
        try:
            body_dep = _dep_of(v.get("bodyDep"))
            return NLam(_name_of(v["param"]), _qt_of(v["paramQt"]),
                        _eff_of(v["latent"]), _graph_of(v["body"]),
                        body_dep)
        except KeyError as e:
            raise JsonSchemaError(f"lam node missing {e}")
    if op == "app":
        return NApp(*_args_of(v, 2))
    if op == "ref":
        return NRef(*_args_of(v, 2))
    if op == "deref":
        return NDeref(*_args_of(v, 1))
    if op == "assign":
        return NAssign(*_args_of(v, 2))
    if op == "name":
        return GName(*_args_of(v, 1))
    if op == "block":
        return _graph_of(v.get("graph"))
    raise JsonSchemaError(f"unknown op kind {op!r}")


def _graph_json(g) -> dict:
    lets = []
    while isinstance(g, GLet):
        entry = {"id": _name_str(g.var), **_exp_json(g.binding)}
        if g.dep is not None:
            entry["dep"] = _dep_json(g.dep)
        lets.append(entry)
        g = g.body
    if not isinstance(g, GName):
        raise JsonSchemaError(f"graph tail must be a name, got {g!r}")
    return {"nodes": lets, "result": _name_str(g.name)}


def _graph_of(v):
    if not isinstance(v, dict) or "nodes" not in v or "result" not in v:
        raise JsonSchemaError(f"graph must have nodes/result, got {v!r}")
    if not isinstance(v["nodes"], list):
        raise JsonSchemaError("nodes must be a list")
    g = GName(_name_of(v["result"]))
    for entry in reversed(v["nodes"]):
        if not isinstance(entry, dict) or "id" not in entry:
            raise JsonSchemaError(f"malformed node entry {entry!r}")
        binding = _exp_of(entry)
        dep = _dep_of(entry.get("dep"))
        g = GLet(_name_of(entry["id"]), binding, g, dep)
    return g


def export_json(g, dep: Optional[DepMap] = None,
                start: Optional[Name] = None) -> str:
    """Serialize an annotated graph term (plus optional top-level
    dependency and start name) to canonical JSON: stable key order, no
    incidental whitespace, byte-stable across runs."""
    doc = {"format": _FORMAT, "version": _VERSION,
           "start": _name_str(start) if start is not None else None,
           "dep": _dep_json(dep),
           "graph": _graph_json(g)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def import_json(text: str):
    """Inverse of export_json; returns (graph, dep, start)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise JsonSchemaError(f"invalid JSON: {e}")
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise JsonSchemaError("not a graph document")
    if doc.get("version") != _VERSION:
        raise JsonSchemaError(f"unsupported version {doc.get('version')!r}")
    g = _graph_of(doc.get("graph"))
    dep = _dep_of(doc.get("dep"))
    start = _name_of(doc["start"]) if doc.get("start") is not None else None
    return g, dep, start


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _read(path: str) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def _write_out(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _regime(args) -> str:
    return RW if getattr(args, "regime", "hard") == "rw" else HARD


def _build_config(src: str, regime: str) -> RuntimeConfig:
    store = initial_store()
    t = parse(src, store)
    infer_direct(store.typing(), t)
    g = to_mnf(t, store.supply)
    return synthesize_config(store, g, regime)


def cmd_check(args) -> int:
    src = _read(args.file)
    store = initial_store()
    t = parse(src, store)
    typing = infer_direct(store.typing(), t)
    print(f"{qt_to_text(typing.qt)} ; {effect_to_text(typing.eff)}")
    return 0


def cmd_mnf(args) -> int:
    src = _read(args.file)
    store = initial_store()
    t = parse(src, store)
    infer_direct(store.typing(), t)
    g = to_mnf(t, store.supply)
    print(graph_to_text(g))
    return 0


def cmd_graph(args) -> int:
    cfg = _build_config(_read(args.file), _regime(args))
    if args.dot:
        _write_out(export_dot(cfg.graph, cfg.dep), args.dot)
    if args.json or not args.dot:
        _write_out(export_json(cfg.graph, cfg.dep, cfg.store.w), args.json)
    return 0


def cmd_opt(args) -> int:
    passes = [p.strip() for p in args.passes.split(",") if p.strip()]
    for p in passes:
        if p not in RULES:
            raise ParseError(f"unknown pass {p!r}; choose from "
                             f"{','.join(RULES)}")
    cfg = _build_config(_read(args.file), _regime(args))
    from .graphir import initial_state
    store = initial_store()
    st, _ = initial_state(store, regime=_regime(args))
    g2, reports = optimize(st, cfg.graph, passes, fuel=args.fuel,
                           supply=store.supply)
    if args.report == "json":
        out = [{"rule": r.rule, "site": list(r.site), "fired": r.fired,
                "reason": r.reason} for r in reports]
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        for r in reports:
            print(f"{r.rule} @ {list(r.site)}: "
                  f"{'fired' if r.fired else r.reason}")
    print(graph_to_text(erase(g2)))
    return 0


def cmd_schedule(args) -> int:
    matchers = tuple(args.match or ())
    for m in matchers:
        if m not in MATCHERS:
            raise ParseError(f"unknown matcher {m!r}; choose from "
                             f"{','.join(MATCHERS)}")
    if args.synthetic:
        if args.time:
            t = time_schedule(args.synthetic, args.depth, args.seed,
                              freq=args.freq)
            print(f"n={args.synthetic} depth={args.depth} "
                  f"seed={args.seed} time={t:.3f}s")
            return 0
        sg = synthetic_graph(args.synthetic, args.depth, args.seed)
        block = schedule(sg, freq=args.freq, compact=args.compact,
                         matchers=matchers)
        _write_out(emit(block) + "\n", args.out)
        return 0
    if not args.file:
        raise ParseError("schedule needs FILE or --synthetic N")
    cfg = _build_config(_read(args.file), _regime(args))
    block = schedule(flatten_config(cfg), freq=args.freq,
                     compact=args.compact, matchers=matchers)
    _write_out(emit(block) + "\n", args.out)
    return 0


def cmd_run(args) -> int:
    src = _read(args.file)
    store = initial_store()
    t = parse(src, store)
    infer_direct(store.typing(), t)
    if args.semantics == "direct":
        res = eval_direct(initial_store(), t, trace=args.trace)
    elif args.semantics == "store":
        res = eval_store(initial_store(), t, trace=args.trace)
    else:
        g = to_mnf(t, store.supply)
        cfg = synthesize_config(initial_store(), g, _regime(args))
        res = eval_graph(cfg, trace=args.trace)
    if args.trace and res.trace is not None:
        for entry in res.trace:
            print(f"  [{entry[0]}]")
    value = canonical_value(res.store, res.value)
    print(f"value: {value}")
    print(f"steps: {res.steps}")
    return 0


def cmd_fuzz(args) -> int:
    from . import testkit
    seed = args.seed
    env_seed = os.environ.get("GIR_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    summary = testkit.fuzz(count=args.count, seed=seed,
                           max_depth=args.max_depth, check=args.check)
    print(summary.render())
    return 0 if summary.failures == 0 else 1


# ---------------------------------------------------------------------------
# Argument parsing / entry point
# ---------------------------------------------------------------------------

def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gir",
        description="Check, normalize, synthesize, rewrite, schedule, and "
                    "run programs of a qualified, effectful calculus.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add_regime(p):
        p.add_argument("--regime", choices=("hard", "rw"), default="hard",
                       help="dependency regime (default: hard)")

    p = sub.add_parser("check", help="type-check a source file")
    p.add_argument("file")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("mnf", help="print the normalized (graph) form")
    p.add_argument("file")
    p.set_defaults(fn=cmd_mnf)

    p = sub.add_parser("graph", help="synthesize and export the "
                                     "dependency-annotated graph")
    p.add_argument("file")
    add_regime(p)
    p.add_argument("--dot", metavar="OUT", help="write DOT here")
    p.add_argument("--json", metavar="OUT", help="write JSON here "
                                                 "(default: stdout)")
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("opt", help="apply graph rewrites")
    p.add_argument("file")
    add_regime(p)
    p.add_argument("--passes", default="dce",
                   help="comma-separated rule names "
                        "(dce,comm,hoist,inline,cse)")
    p.add_argument("--fuel", type=int, default=1000)
    p.add_argument("--report", choices=("text", "json"), default="text")
    p.set_defaults(fn=cmd_opt)

    p = sub.add_parser("schedule", help="schedule a graph back to trees")
    p.add_argument("file", nargs="?")
    add_regime(p)
    p.add_argument("--freq", action="store_true",
                   help="frequency-driven code motion")
    p.add_argument("--compact", action="store_true",
                   help="inline single-use pure nodes")
    p.add_argument("--match", action="append", metavar="NAME",
                   help="tree matcher to apply (gemm, addmul)")
    p.add_argument("-o", "--out", metavar="OUT")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="schedule a synthetic n-node benchmark graph")
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time", action="store_true",
                   help="print scheduling wall time instead of output")
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("run", help="evaluate a source file")
    p.add_argument("file")
    add_regime(p)
    p.add_argument("--semantics", choices=("direct", "store", "graph"),
                   default="graph")
    p.add_argument("--trace", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("fuzz", help="random differential testing")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--check", default="differential",
                   choices=("translation", "synthesis", "deps",
                            "differential", "optimizer"))
    p.set_defaults(fn=cmd_fuzz)

    return ap


def main(argv: Optional[list] = None) -> int:
    args = _build_argparser().parse_args(argv)
    file = getattr(args, "file", None) or "<input>"
    try:
        return args.fn(args)
    except GirError as err:
        print(diagnostic_of(err, file).render(), file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 — internal failure
        print(f"internal error: {type(err).__name__}: {err}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
