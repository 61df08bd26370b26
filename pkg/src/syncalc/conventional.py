"""Reducer for the conventional calculus: terms over a global memory of
object identifiers.

Values are object identifiers and integer literals.  Declarations are
elaborated left to right by substituting the value for the variable; a
block whose declarations are all consumed collapses to its body.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import (THIS, Block, ClassTable, Decl, DeclType, Expr, FieldAccess,
                    FieldAssign, Ident, IntLit, Invoke, New, Oid, Var, rename_free)


@dataclass(frozen=True)
class ObjState:
    cls: str
    slots: tuple[Expr, ...]  # Oid or IntLit


@dataclass
class Memory:
    objects: dict[int, ObjState] = field(default_factory=dict)
    next_serial: int = 1

    def copy(self) -> "Memory":
        return Memory(dict(self.objects), self.next_serial)

    def alloc(self, st: ObjState) -> int:
        n = self.next_serial
        self.objects[n] = st
        self.next_serial += 1
        return n

    def dom(self) -> set[int]:
        return set(self.objects)

    def closed(self) -> bool:
        return all(not isinstance(s, Oid) or s.serial in self.objects
                   for st in self.objects.values() for s in st.slots)


@dataclass
class Config:
    expr: Expr
    mem: Memory = field(default_factory=Memory)


@dataclass(frozen=True)
class CDone:
    value: Expr
    mem: Memory


@dataclass(frozen=True)
class CStep:
    cfg: Config
    rule: str


@dataclass(frozen=True)
class CStuck:
    detail: str


COutcome = Union[CDone, CStep, CStuck]


def is_cvalue(e: Expr) -> bool:
    return isinstance(e, (Oid, IntLit))


def collapse(e: Expr) -> Expr:
    """Strip empty blocks around ``e`` (block-elim at the top)."""
    while isinstance(e, Block) and not e.decls:
        e = e.body
    return e


class _Stuck(Exception):
    pass


def _lookup(mem: Memory, e: Expr) -> tuple[int, ObjState]:
    if not isinstance(e, Oid):
        raise _Stuck(f"receiver {e} is not an object")
    if e.serial not in mem.objects:
        raise _Stuck(f"dangling object #{e.serial}")
    return e.serial, mem.objects[e.serial]


def _red(e: Expr, mem: Memory, ct: ClassTable) -> tuple[Expr, str]:
    """One step at the unique redex of ``e`` (not a value); mutates ``mem``."""
    match e:
        case Var(x):
            raise _Stuck(f"free variable {x}")
        case FieldAccess(r, f):
            if not is_cvalue(collapse(r)):
                r2, rule = _red(r, mem, ct)
                return FieldAccess(r2, f), rule
            n, st = _lookup(mem, collapse(r))
            i = ct.field_index(st.cls, f)
            if i is None:
                raise _Stuck(f"class {st.cls} has no field {f}")
            return st.slots[i], "field-access"
        case FieldAssign(r, f, rhs):
            if not is_cvalue(collapse(r)):
                r2, rule = _red(r, mem, ct)
                return FieldAssign(r2, f, rhs), rule
            if not is_cvalue(collapse(rhs)):
                rhs2, rule = _red(rhs, mem, ct)
                return FieldAssign(r, f, rhs2), rule
            n, st = _lookup(mem, collapse(r))
            i = ct.field_index(st.cls, f)
            if i is None:
                raise _Stuck(f"class {st.cls} has no field {f}")
            v = collapse(rhs)
            slots = list(st.slots)
            slots[i] = v
            mem.objects[n] = ObjState(st.cls, tuple(slots))
            return v, "field-assign"
        case New(c, args):
            for k, a in enumerate(args):
                if not is_cvalue(collapse(a)):
                    a2, rule = _red(a, mem, ct)
                    return New(c, args[:k] + (a2,) + args[k + 1:]), rule
            if c not in ct:
                raise _Stuck(f"unknown class {c}")
            if len(args) != len(ct.fields(c)):
                raise _Stuck(f"constructor {c} arity mismatch")
            n = mem.alloc(ObjState(c, tuple(collapse(a) for a in args)))
            return Oid(n), "new"
        case Invoke(r, m, args):
            if not is_cvalue(collapse(r)):
                r2, rule = _red(r, mem, ct)
                return Invoke(r2, m, args), rule
            for k, a in enumerate(args):
                if not is_cvalue(collapse(a)):
                    a2, rule = _red(a, mem, ct)
                    return Invoke(r, m, args[:k] + (a2,) + args[k + 1:]), rule
            n, st = _lookup(mem, collapse(r))
            sig = ct.method(st.cls, m)
            if sig is None:
                raise _Stuck(f"class {st.cls} has no method {m}")
            if len(sig.params) != len(args):
                raise _Stuck(f"method {st.cls}.{m} arity mismatch")
            decls = (Decl(DeclType(st.cls), Ident(THIS), Oid(n)),) + tuple(
                Decl(p.dtype, p.var, collapse(a)) for p, a in zip(sig.params, args))
            return Block(decls, sig.body, frozenset()), "invk"
        case Block(decls, body, annot):
            if not decls:
                return _red(body, mem, ct)
            d = decls[0]
            if not is_cvalue(collapse(d.init)):
                init2, rule = _red(d.init, mem, ct)
                return Block((Decl(d.dtype, d.var, init2),) + decls[1:], body, annot), rule
            ren = {d.var: collapse(d.init)}
            rest = tuple(Decl(x.dtype, x.var, rename_free(x.init, ren)) for x in decls[1:])
            body2 = rename_free(body, ren)
            if not rest:
                return body2, "dec"
            return Block(rest, body2, frozenset()), "dec"
    raise _Stuck(f"no rule applies to {type(e).__name__}")


def cstep(cfg: Config, ct: ClassTable) -> COutcome:
    e = collapse(cfg.expr)
    if is_cvalue(e):
        return CDone(e, cfg.mem)
    mem = cfg.mem.copy()
    try:
        e2, rule = _red(e, mem, ct)
    except _Stuck as exc:
        return CStuck(str(exc))
    return CStep(Config(e2, mem), rule)


@dataclass(frozen=True)
class FuelExhausted:
    fuel: int


@dataclass
class CRun:
    steps: list[tuple[str, Config]]
    outcome: Union[CDone, CStuck, FuelExhausted]
    final: Config


def crun(cfg: Config, ct: ClassTable, fuel: int = 1000) -> CRun:
    steps: list[tuple[str, Config]] = []
    cur = cfg
    for _ in range(fuel):
        out = cstep(cur, ct)
        if isinstance(out, CStep):
            steps.append((out.rule, out.cfg))
            cur = out.cfg
        else:
            return CRun(steps, out, cur)
    out = cstep(cur, ct)
    if isinstance(out, CDone):
        return CRun(steps, out, cur)
    return CRun(steps, FuelExhausted(fuel), cur)


def fj_substitute(target: int, ct: ClassTable, cls: str, m: str,
                  args: tuple[Expr, ...]) -> Optional[Expr]:
    """Direct one-shot substitution ``body[target/this][v1/x1]...``."""
    sig = ct.method(cls, m)
    if sig is None:
        return None
    ren: dict[Ident, Expr] = {Ident(THIS): Oid(target)}
    ren.update((p.var, a) for p, a in zip(sig.params, args))
    return rename_free(sig.body, ren)
