"""Recursive-descent parser for the surface language.

    program   ::= classdecl* items
    classdecl ::= "class" C "{" (type f ";")* method* "}"
    method    ::= type m "(" (param ("," param)*)? ")" "{" items "}"
    param     ::= ["a"] type x
    items     ::= (item ";")* expr          item ::= decl | expr
    decl      ::= ["a"] type x "=" expr
    expr      ::= prim ("." f | "." m "(" args ")")* ["=" expr]
    prim      ::= x | n | #n | "new" C "(" args ")" | "{" items "}" ["^" "[" xs "]"] | "(" expr ")"

An expression item that is not last is sugar for a declaration of an
unused variable.  The outermost braces of the main term may be omitted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .terms import (INT, THIS, Block, ClassDef, ClassTable, Decl, DeclType, Expr,
                    FieldAccess, FieldAssign, Ident, IntLit, Invoke, MethodSig, New, Oid,
                    Param, Qualifier, Var, annotate, check_class_table, static_type,
                    well_formed)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<oid>\#\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\#\d+)?)
  | (?P<int>-?\d+)
  | (?P<sym>[{}()\[\];,.=^])
""", re.VERBOSE)

KEYWORDS = {"class", "new"}
AFFINE = "a"


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks, pos, line, lstart = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - lstart + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            if kind == "ident" and chunk in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, chunk, line, pos - lstart + 1))
        for i, ch in enumerate(chunk):
            if ch == "\n":
                line += 1
                lstart = pos + i + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - lstart + 1))
    return toks


def parse_ident(text: str) -> Ident:
    name, _, uid = text.partition("#")
    return Ident(name, int(uid) if uid else 0)


@dataclass
class SourceProgram:
    ct: ClassTable
    main: Expr
    path: Optional[str] = None
    policy: str = "reach"
    strict_affine: bool = True
    diagnostics: list[str] = field(default_factory=list)


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.ct = ClassTable()
        self.seq = 0
        self.env: list[dict[Ident, str]] = [{}]

    # -- token helpers -----------------------------------------------------

    def peek(self, k: int = 0) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind in ("sym", "kw", "ident") and t.text == text

    def error(self, msg: str, tok: Optional[Tok] = None):
        tok = tok or self.peek()
        found = tok.text or "end of input"
        raise ParseError(f"{msg} (found {found!r})", tok.line, tok.col)

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def advance(self) -> Tok:
        t = self.peek()
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> Tok:
        t = self.peek()
        if t.kind != "ident":
            self.error(f"expected {what}")
        return self.advance()

    def lookup_type(self, x: Ident) -> Optional[str]:
        for scope in reversed(self.env):
            if x in scope:
                return scope[x]
        return None

    def flat_env(self) -> dict[Ident, str]:
        out: dict[Ident, str] = {}
        for scope in self.env:
            out.update(scope)
        return out

    # -- program -----------------------------------------------------------

    def program(self) -> tuple[ClassTable, Expr]:
        pending = []
        while self.at("class"):
            pending.append(self.class_header())
        # method bodies are parsed once every class signature is known
        for cdef, method_toks in pending:
            self.ct.classes[cdef.name] = cdef
        for cdef, method_toks in pending:
            for start, sig in method_toks:
                cdef.methods[sig.name] = self.method_body(cdef, sig, start)
        self.i = self._main_start
        main = self.items(top=True)
        if self.peek().kind != "eof":
            self.error("expected end of input")
        return self.ct, main

    def class_header(self):
        self.expect("class")
        name = self.ident("class name").text
        self.expect("{")
        fields, methods = [], []
        while not self.at("}"):
            t = self.type_name()
            member = self.ident("member name")
            if self.at(";"):
                self.advance()
                fields.append((t, member.text))
            elif self.at("("):
                self.advance()
                params = []
                while not self.at(")"):
                    params.append(self.param())
                    if not self.at(")"):
                        self.expect(",")
                self.expect(")")
                self.expect("{")
                start = self.i
                self.skip_braced()
                methods.append((start, MethodSig(member.text, t, tuple(params), IntLit(0))))
            else:
                self.error("expected ';' or '('")
        self.expect("}")
        self._main_start = self.i
        return ClassDef(name, tuple(fields), {}), methods

    def skip_braced(self) -> None:
        depth = 1
        while depth:
            t = self.advance()
            if t.kind == "eof":
                self.error("unterminated method body", t)
            if t.text == "{" and t.kind == "sym":
                depth += 1
            elif t.text == "}" and t.kind == "sym":
                depth -= 1

    def method_body(self, cdef: ClassDef, sig: MethodSig, start: int) -> MethodSig:
        saved = self.i
        self.i = start
        scope = {Ident(THIS): cdef.name}
        scope.update((p.var, p.dtype.cls) for p in sig.params)
        self.env.append(scope)
        body = self.items(top=False)
        self.env.pop()
        self.expect("}")
        self.i = saved
        return MethodSig(sig.name, sig.ret, sig.params, body)

    def type_name(self) -> str:
        return self.ident("type name").text

    def param(self) -> Param:
        qual = Qualifier.PLAIN
        if self.at(AFFINE) and self.peek(1).kind == "ident" and self.peek(2).kind == "ident":
            self.advance()
            qual = Qualifier.AFFINE
        t = self.type_name()
        x = parse_ident(self.ident("parameter name").text)
        return Param(DeclType(t, qual), x)

    # -- blocks and items ----------------------------------------------------

    def is_decl_start(self) -> bool:
        p = self.peek
        if (self.at(AFFINE) and p(1).kind == "ident" and p(2).kind == "ident"
                and self.at("=", 3)):
            return True
        return p().kind == "ident" and p(1).kind == "ident" and self.at("=", 2)

    def items(self, top: bool) -> Expr:
        """Parse ``(item ;)* expr`` up to a closing brace (or end of input)."""
        decls: list[Decl] = []
        self.env.append({})
        body = None
        while True:
            if self.is_decl_start():
                d = self.decl()
                decls.append(d)
            else:
                e = self.expr()
                if self.at(";"):
                    t = static_type(e, self.flat_env(), self.ct) or INT
                    self.seq += 1
                    decls.append(Decl(DeclType(t), Ident(f"_{self.seq}"), e))
                else:
                    body = e
                    break
            self.expect(";")
            if self.at("}") or self.peek().kind == "eof":
                self.error("block must end with an expression")
        self.env.pop()
        if not decls and top:
            return body
        return Block(tuple(decls), body, None)

    def decl(self) -> Decl:
        qual = Qualifier.PLAIN
        if self.at(AFFINE) and self.peek(2).kind == "ident":
            self.advance()
            qual = Qualifier.AFFINE
        t = self.type_name()
        x = parse_ident(self.ident("variable name").text)
        # declared variables scope over the whole block
        self.env[-1][x] = t
        self.expect("=")
        return Decl(DeclType(t, qual), x, self.expr())

    # -- expressions ---------------------------------------------------------

    def expr(self) -> Expr:
        e = self.prim()
        while self.at("."):
            self.advance()
            name = self.ident("field or method name").text
            if self.at("("):
                e = Invoke(e, name, self.args())
            else:
                e = FieldAccess(e, name)
        if self.at("="):
            tok = self.peek()
            if not isinstance(e, FieldAccess):
                self.error("assignment target must be a field access", tok)
            self.advance()
            e = FieldAssign(e.recv, e.field, self.expr())
        return e

    def args(self) -> tuple[Expr, ...]:
        self.expect("(")
        out = []
        while not self.at(")"):
            out.append(self.expr())
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return tuple(out)

    def prim(self) -> Expr:
        t = self.peek()
        if t.kind == "ident":
            self.advance()
            return Var(parse_ident(t.text))
        if t.kind == "int":
            self.advance()
            return IntLit(int(t.text))
        if t.kind == "oid":
            self.advance()
            return Oid(int(t.text[1:]))
        if self.at("new"):
            self.advance()
            c = self.ident("class name").text
            return New(c, self.args())
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if self.at("{"):
            self.advance()
            b = self.items(top=False)
            self.expect("}")
            if not isinstance(b, Block):
                b = Block((), b, None)
            if self.at("^"):
                self.advance()
                self.expect("[")
                xs = []
                while not self.at("]"):
                    xs.append(parse_ident(self.ident().text))
                    if not self.at("]"):
                        self.expect(",")
                self.expect("]")
                b = Block(b.decls, b.body, frozenset(xs))
            return b
        self.error("expected an expression")


def parse_program(text: str, path: Optional[str] = None, policy: str = "reach",
                  strict_affine: bool = True) -> SourceProgram:
    """Parse, fill missing block annotations, and collect diagnostics."""
    p = Parser(text)
    p._main_start = 0
    ct, main = p.program()
    ct = ct.map_bodies(lambda b: annotate(b, policy, only_missing=True))
    main = annotate(main, policy, only_missing=True)
    diags = check_class_table(ct, strict_affine) + well_formed(main, ct, strict_affine)
    return SourceProgram(ct, main, path, policy, strict_affine, diags)


def parse_expr(text: str, policy: Optional[str] = "reach") -> Expr:
    """Parse a bare term (no class declarations)."""
    p = Parser(text)
    p._main_start = 0
    e = p.items(top=True)
    if p.peek().kind != "eof":
        p.error("expected end of input")
    return e if policy is None else annotate(e, policy, only_missing=True)
