"""Term representation and binding machinery shared by both calculi.

One AST serves both the syntactic calculus (pure terms, blocks carry
annotations) and the conventional one (terms may contain object
identifiers).  Identifiers carry a numeric ``uid`` so that a reduction
session can keep every binding occurrence globally unique.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Union

INT = "int"
THIS = "this"


@dataclass(frozen=True, order=True)
class Ident:
    name: str
    uid: int = 0

    def __str__(self) -> str:
        return self.name if self.uid == 0 else f"{self.name}#{self.uid}"


class Qualifier(enum.Enum):
    PLAIN = ""
    AFFINE = "a"


@dataclass(frozen=True)
class DeclType:
    cls: str
    qual: Qualifier = Qualifier.PLAIN

    @property
    def affine(self) -> bool:
        return self.qual is Qualifier.AFFINE

    def __str__(self) -> str:
        return f"a {self.cls}" if self.affine else self.cls


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Var:
    x: Ident


@dataclass(frozen=True)
class Oid:
    serial: int


@dataclass(frozen=True)
class IntLit:
    n: int


@dataclass(frozen=True)
class FieldAccess:
    recv: "Expr"
    field: str


@dataclass(frozen=True)
class FieldAssign:
    recv: "Expr"
    field: str
    rhs: "Expr"


@dataclass(frozen=True)
class New:
    cls: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Invoke:
    recv: "Expr"
    method: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Decl:
    dtype: DeclType
    var: Ident
    init: "Expr"


@dataclass(frozen=True)
class Block:
    decls: tuple[Decl, ...]
    body: "Expr"
    # None only between parsing and annotation
    annot: Optional[frozenset[Ident]] = frozenset()


Expr = Union[Var, Oid, IntLit, FieldAccess, FieldAssign, New, Invoke, Block]


def atomic(e: Expr) -> bool:
    return isinstance(e, (Var, IntLit))


def is_dv(d: Decl) -> bool:
    """An evaluated declaration: plain, initialized by a constructor call on atoms."""
    return (not d.dtype.affine and isinstance(d.init, New)
            and all(atomic(a) for a in d.init.args))


def dom(ds: Iterable[Decl]) -> set[Ident]:
    return {d.var for d in ds}


def split_dvs(ds: Iterable[Decl]) -> tuple[tuple[Decl, ...], tuple[Decl, ...]]:
    dvs, rest = [], []
    for d in ds:
        (dvs if is_dv(d) else rest).append(d)
    return tuple(dvs), tuple(rest)


def children(e: Expr) -> Iterator[Expr]:
    match e:
        case FieldAccess(r, _):
            yield r
        case FieldAssign(r, _, rhs):
            yield r
            yield rhs
        case New(_, args):
            yield from args
        case Invoke(r, _, args):
            yield r
            yield from args
        case Block(decls, body, _):
            for d in decls:
                yield d.init
            yield body


def subterms(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from subterms(c)


def is_pure(e: Expr) -> bool:
    return not any(isinstance(s, Oid) for s in subterms(e))


def binders(e: Expr) -> list[Ident]:
    """All binding occurrences, in pre-order."""
    out = []
    for s in subterms(e):
        if isinstance(s, Block):
            out.extend(d.var for d in s.decls)
    return out


def all_idents(e: Expr) -> set[Ident]:
    out: set[Ident] = set()
    for s in subterms(e):
        if isinstance(s, Var):
            out.add(s.x)
        elif isinstance(s, Block):
            out.update(d.var for d in s.decls)
    return out


# ---------------------------------------------------------------------------
# Free variables


def free_vars(e: Expr) -> set[Ident]:
    match e:
        case Var(x):
            return {x}
        case Oid() | IntLit():
            return set()
        case Block(decls, body, _):
            fv = free_vars(body)
            for d in decls:
                fv |= free_vars(d.init)
            return fv - dom(decls)
        case _:
            fv = set()
            for c in children(e):
                fv |= free_vars(c)
            return fv


def free_vars_decls(ds: Iterable[Decl]) -> set[Ident]:
    """FV(ds): free variables of the initializers (not closed over dom(ds))."""
    fv: set[Ident] = set()
    for d in ds:
        fv |= free_vars(d.init)
    return fv


def occurrences(e: Expr, x: Ident) -> int:
    """Number of free occurrences of ``x`` in ``e``."""
    match e:
        case Var(y):
            return int(y == x)
        case Block(decls, body, _):
            if x in dom(decls):
                return 0
    return sum(occurrences(c, x) for c in children(e))


# ---------------------------------------------------------------------------
# Fresh names


class FreshSupply:
    """Per-session source of identifiers that have never been handed out.

    The set of used identifiers only grows, so a name removed from a term
    (e.g. by garbage collection) is never reused later in the same session.
    """

    def __init__(self, used: Iterable[Ident] = ()):
        self.used: set[Ident] = set(used)

    def reserve(self, idents: Iterable[Ident]) -> None:
        self.used.update(idents)

    def fresh(self, base: Ident | str) -> Ident:
        name = base if isinstance(base, str) else base.name
        cand = Ident(name, 0)
        if cand not in self.used:
            self.used.add(cand)
            return cand
        for k in itertools.count(2):
            cand = Ident(name, k)
            if cand not in self.used:
                self.used.add(cand)
                return cand
        raise AssertionError("unreachable")


def _default_supply(*terms: Expr, extra: Iterable[Ident] = ()) -> FreshSupply:
    used = set(extra)
    for t in terms:
        used |= all_idents(t)
    return FreshSupply(used)


# ---------------------------------------------------------------------------
# Renaming and substitution


def rename_free(e: Expr, ren: dict[Ident, Expr]) -> Expr:
    """Simultaneous substitution of free variables, *not* capture-avoiding.

    Callers guarantee no capture (binders of ``e`` disjoint from the free
    variables of the images), which holds under global uniqueness.
    """
    if not ren:
        return e
    match e:
        case Var(x):
            return ren.get(x, e)
        case Oid() | IntLit():
            return e
        case FieldAccess(r, f):
            return FieldAccess(rename_free(r, ren), f)
        case FieldAssign(r, f, rhs):
            return FieldAssign(rename_free(r, ren), f, rename_free(rhs, ren))
        case New(c, args):
            return New(c, tuple(rename_free(a, ren) for a in args))
        case Invoke(r, m, args):
            return Invoke(rename_free(r, ren), m, tuple(rename_free(a, ren) for a in args))
        case Block(decls, body, annot):
            bound = dom(decls)
            inner = {k: v for k, v in ren.items() if k not in bound}
            return Block(tuple(replace(d, init=rename_free(d.init, inner)) for d in decls),
                         rename_free(body, inner), annot)
    raise TypeError(e)


def rename_binders(e: Expr, supply: FreshSupply) -> Expr:
    """Give every binder in ``e`` a fresh identifier from ``supply``."""
    return _freshen(e, {}, supply)


def _freshen(e: Expr, env: dict[Ident, Ident], supply: FreshSupply) -> Expr:
    match e:
        case Var(x):
            return Var(env[x]) if x in env else e
        case Oid() | IntLit():
            return e
        case FieldAccess(r, f):
            return FieldAccess(_freshen(r, env, supply), f)
        case FieldAssign(r, f, rhs):
            return FieldAssign(_freshen(r, env, supply), f, _freshen(rhs, env, supply))
        case New(c, args):
            return New(c, tuple(_freshen(a, env, supply) for a in args))
        case Invoke(r, m, args):
            return Invoke(_freshen(r, env, supply), m,
                          tuple(_freshen(a, env, supply) for a in args))
        case Block(decls, body, annot):
            env2 = dict(env)
            for d in decls:
                env2[d.var] = supply.fresh(d.var)
            new_annot = None if annot is None else frozenset(env2[x] for x in annot)
            return Block(tuple(Decl(d.dtype, env2[d.var], _freshen(d.init, env2, supply))
                               for d in decls),
                         _freshen(body, env2, supply), new_annot)
    raise TypeError(e)


def freshen(e: Expr, supply: Optional[FreshSupply] = None) -> Expr:
    """Alpha-equivalent copy of ``e`` whose binders are pairwise distinct and
    distinct from every free variable.  Display names are kept; the uid only
    changes when a name is already taken."""
    if supply is None:
        supply = FreshSupply(free_vars(e))
    else:
        supply.reserve(free_vars(e))
    return _freshen(e, {}, supply)


def subst_var(e: Expr, y: Ident, x: Ident, supply: Optional[FreshSupply] = None) -> Expr:
    """Capture-avoiding ``e[y/x]``."""
    if supply is None:
        supply = _default_supply(e, extra=(x, y))
    return _subst(e, x, Var(y), {y}, supply, None)


def subst_var_decls(ds: tuple[Decl, ...], y: Ident, x: Ident,
                    supply: Optional[FreshSupply] = None) -> tuple[Decl, ...]:
    """``ds[y/x]`` for a declaration sequence whose binders are not renamed."""
    if supply is None:
        supply = _default_supply(*(d.init for d in ds), extra=(x, y))
    return tuple(replace(d, init=_subst(d.init, x, Var(y), {y}, supply, None)) for d in ds)


def subst_var_set(xs: frozenset[Ident], y: Ident, x: Ident) -> frozenset[Ident]:
    return frozenset(y if z == x else z for z in xs)


def subst_value(e: Expr, v: Expr, x: Ident, supply: Optional[FreshSupply] = None) -> Expr:
    """Replace the free occurrences of ``x`` by the value ``v``.

    The first occurrence (pre-order) receives ``v`` itself; every further
    occurrence receives a copy with freshly renamed binders, so binder
    uniqueness survives even when ``x`` occurs more than once.
    """
    if supply is None:
        supply = _default_supply(e, v, extra=(x,))
    return _subst(e, x, v, free_vars(v), supply, [0])


def _subst(e: Expr, x: Ident, v: Expr, fv_v: set[Ident], supply: FreshSupply,
           counter: Optional[list[int]]) -> Expr:
    def go(t: Expr) -> Expr:
        return _subst(t, x, v, fv_v, supply, counter)

    match e:
        case Var(y):
            if y != x:
                return e
            if counter is None:
                return v
            counter[0] += 1
            return v if counter[0] == 1 else rename_binders(v, supply)
        case Oid() | IntLit():
            return e
        case FieldAccess(r, f):
            return FieldAccess(go(r), f)
        case FieldAssign(r, f, rhs):
            r2 = go(r)
            return FieldAssign(r2, f, go(rhs))
        case New(c, args):
            return New(c, tuple(go(a) for a in args))
        case Invoke(r, m, args):
            r2 = go(r)
            return Invoke(r2, m, tuple(go(a) for a in args))
        case Block(decls, body, annot):
            bound = dom(decls)
            if x in bound or occurrences(e, x) == 0:
                return e
            clash = bound & fv_v
            if clash:
                ren = {z: supply.fresh(z) for z in sorted(clash)}
                rv = {z: Var(w) for z, w in ren.items()}
                decls = tuple(Decl(d.dtype, ren.get(d.var, d.var), rename_free(d.init, rv))
                              for d in decls)
                body = rename_free(body, rv)
                if annot is not None:
                    annot = frozenset(ren.get(z, z) for z in annot)
            return Block(tuple(replace(d, init=go(d.init)) for d in decls), go(body), annot)
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Values and capsules


@dataclass(frozen=True)
class NotValue:
    pass


@dataclass(frozen=True)
class VarValue:
    x: Ident


@dataclass(frozen=True)
class IntValue:
    n: int


@dataclass(frozen=True)
class BlockValue:
    dvs: tuple[Decl, ...]
    x: Ident
    annot: frozenset[Ident]


ValueClass = Union[NotValue, VarValue, IntValue, BlockValue]


def reduct(ds: Iterable[Decl], e: Expr) -> list[Decl]:
    """Declarations of the variables transitively used by ``e``, order kept."""
    ds = list(ds)
    by_var = {d.var: d for d in ds}
    used: set[Ident] = set()
    todo = [z for z in free_vars(e) if z in by_var]
    while todo:
        z = todo.pop()
        if z in used:
            continue
        used.add(z)
        todo.extend(w for w in free_vars(by_var[z].init) if w in by_var and w not in used)
    return [d for d in ds if d.var in used]


def classify_value(e: Expr) -> ValueClass:
    match e:
        case Var(x):
            return VarValue(x)
        case IntLit(n):
            return IntValue(n)
        case Block(decls, Var(x), annot):
            if decls and all(is_dv(d) for d in decls) and len(reduct(decls, Var(x))) == len(decls):
                return BlockValue(decls, x, annot or frozenset())
    return NotValue()


def is_value(e: Expr) -> bool:
    return not isinstance(classify_value(e), NotValue)


def is_block_value(e: Expr) -> bool:
    return isinstance(classify_value(e), BlockValue)


def is_capsule(v: Expr) -> bool:
    return is_block_value(v) and not free_vars(v)


# ---------------------------------------------------------------------------
# Block annotations


ANNOT_POLICIES = ("all", "used", "reach")


def block_annotation(decls: tuple[Decl, ...], body: Expr, policy: str) -> frozenset[Ident]:
    if policy == "all":
        return frozenset(dom(decls))
    if policy == "used":
        fv = free_vars(body) | free_vars_decls(decls)
        return frozenset(dom(decls) & fv)
    if policy == "reach":
        return frozenset(d.var for d in reduct(decls, body))
    raise ValueError(f"unknown annotation policy {policy!r}")


def annotate(e: Expr, policy: str = "reach", only_missing: bool = False) -> Expr:
    """Rewrite block annotations per ``policy`` (all / used / reach)."""
    match e:
        case Var() | Oid() | IntLit():
            return e
        case FieldAccess(r, f):
            return FieldAccess(annotate(r, policy, only_missing), f)
        case FieldAssign(r, f, rhs):
            return FieldAssign(annotate(r, policy, only_missing), f,
                               annotate(rhs, policy, only_missing))
        case New(c, args):
            return New(c, tuple(annotate(a, policy, only_missing) for a in args))
        case Invoke(r, m, args):
            return Invoke(annotate(r, policy, only_missing), m,
                          tuple(annotate(a, policy, only_missing) for a in args))
        case Block(decls, body, annot):
            decls = tuple(replace(d, init=annotate(d.init, policy, only_missing)) for d in decls)
            body = annotate(body, policy, only_missing)
            if annot is None or not only_missing:
                annot = block_annotation(decls, body, policy)
            return Block(decls, body, annot)
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Class table


@dataclass(frozen=True)
class Param:
    dtype: DeclType
    var: Ident


@dataclass(frozen=True)
class MethodSig:
    name: str
    ret: str
    params: tuple[Param, ...]
    body: Expr


@dataclass(frozen=True)
class ClassDef:
    name: str
    fields: tuple[tuple[str, str], ...]  # (type, field name)
    methods: dict[str, MethodSig] = field(default_factory=dict, hash=False, compare=True)


class ClassTable:
    def __init__(self, classes: Iterable[ClassDef] = ()):
        self.classes: dict[str, ClassDef] = {}
        for c in classes:
            self.classes[c.name] = c

    def __contains__(self, cls: str) -> bool:
        return cls in self.classes

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassTable) and self.classes == other.classes

    def fields(self, cls: str) -> tuple[tuple[str, str], ...]:
        return self.classes[cls].fields

    def field_index(self, cls: str, f: str) -> Optional[int]:
        if cls not in self.classes:
            return None
        for i, (_, name) in enumerate(self.classes[cls].fields):
            if name == f:
                return i
        return None

    def field_type(self, cls: str, f: str) -> Optional[str]:
        i = self.field_index(cls, f)
        return None if i is None else self.classes[cls].fields[i][0]

    def method(self, cls: str, m: str) -> Optional[MethodSig]:
        c = self.classes.get(cls)
        return None if c is None else c.methods.get(m)

    def map_bodies(self, fn) -> "ClassTable":
        return ClassTable(
            ClassDef(c.name, c.fields,
                     {m: replace(s, body=fn(s.body)) for m, s in c.methods.items()})
            for c in self.classes.values())


# ---------------------------------------------------------------------------
# Well-formedness


def static_type(e: Expr, env: dict[Ident, str], ct: ClassTable) -> Optional[str]:
    """Best-effort class of ``e``; None when it cannot be determined."""
    match e:
        case Var(x):
            return env.get(x)
        case IntLit():
            return INT
        case Oid():
            return None
        case FieldAccess(r, f):
            rt = static_type(r, env, ct)
            return None if rt is None else ct.field_type(rt, f)
        case FieldAssign(r, f, rhs):
            rt = static_type(r, env, ct)
            ft = None if rt is None else ct.field_type(rt, f)
            return ft or static_type(rhs, env, ct)
        case New(c, _):
            return c
        case Invoke(r, m, _):
            rt = static_type(r, env, ct)
            sig = None if rt is None else ct.method(rt, m)
            return None if sig is None else sig.ret
        case Block(decls, body, _):
            env2 = dict(env)
            env2.update((d.var, d.dtype.cls) for d in decls)
            return static_type(body, env2, ct)
    return None


def well_formed(e: Expr, ct: ClassTable, strict_affine: bool = True,
                env: Optional[dict[Ident, str]] = None) -> list[str]:
    """All well-formedness violations of ``e``; an empty list means ok."""
    diags: list[str] = []
    _wf(e, ct, strict_affine, dict(env or {}), diags)
    return diags


def _wf(e: Expr, ct: ClassTable, strict: bool, env: dict[Ident, str], diags: list[str]) -> None:
    match e:
        case New(c, args):
            if c not in ct:
                diags.append(f"unknown class {c}")
            elif len(args) != len(ct.fields(c)):
                diags.append(f"constructor {c} expects {len(ct.fields(c))} arguments, got {len(args)}")
        case FieldAccess(r, f) | FieldAssign(r, f, _):
            rt = static_type(r, env, ct)
            if rt is not None and rt != INT and ct.field_index(rt, f) is None:
                diags.append(f"class {rt} has no field {f}")
            elif rt is None and not any(ct.field_index(c, f) is not None for c in ct.classes):
                diags.append(f"unknown field {f}")
        case Invoke(r, m, args):
            rt = static_type(r, env, ct)
            if rt is not None and rt != INT:
                sig = ct.method(rt, m)
                if sig is None:
                    diags.append(f"class {rt} has no method {m}")
                elif len(sig.params) != len(args):
                    diags.append(f"method {rt}.{m} expects {len(sig.params)} arguments, got {len(args)}")
            elif rt is None and not any(ct.method(c, m) for c in ct.classes):
                diags.append(f"unknown method {m}")
        case Block(decls, body, annot):
            seen: set[Ident] = set()
            for d in decls:
                if d.var in seen:
                    diags.append(f"duplicate declaration {d.var}")
                seen.add(d.var)
                if d.dtype.cls != INT and d.dtype.cls not in ct:
                    diags.append(f"unknown class {d.dtype.cls} in declaration of {d.var}")
            if annot is not None and not annot <= seen:
                extra = ", ".join(str(z) for z in sorted(annot - seen))
                diags.append(f"annotation mentions undeclared {extra}")
            if strict:
                for d in decls:
                    if d.dtype.affine:
                        n = sum(occurrences(d2.init, d.var) for d2 in decls) + occurrences(body, d.var)
                        if n > 1:
                            diags.append(f"affine {d.var} occurs {n} times")
            env = dict(env)
            env.update((d.var, d.dtype.cls) for d in decls)
    for c in children(e):
        _wf(c, ct, strict, env, diags)


def check_class_table(ct: ClassTable, strict_affine: bool = True) -> list[str]:
    diags = []
    for c in ct.classes.values():
        names = [f for _, f in c.fields]
        if len(set(names)) != len(names):
            diags.append(f"class {c.name} has duplicate fields")
        for t, f in c.fields:
            if t != INT and t not in ct:
                diags.append(f"field {c.name}.{f} has unknown type {t}")
        for sig in c.methods.values():
            pnames = [p.var for p in sig.params]
            if len(set(pnames)) != len(pnames) or Ident(THIS) in pnames:
                diags.append(f"method {c.name}.{sig.name} has ill-formed parameters")
            env = {Ident(THIS): c.name}
            env.update((p.var, p.dtype.cls) for p in sig.params)
            for p in sig.params:
                if strict_affine and p.dtype.affine and occurrences(sig.body, p.var) > 1:
                    diags.append(f"affine parameter {p.var} of {c.name}.{sig.name} "
                                 f"occurs {occurrences(sig.body, p.var)} times")
            extra = free_vars(sig.body) - set(env)
            if extra:
                diags.append(f"method {c.name}.{sig.name} has free variables "
                             + ", ".join(str(z) for z in sorted(extra)))
            diags += [f"in {c.name}.{sig.name}: {d}"
                      for d in well_formed(sig.body, ct, strict_affine, env)]
    return diags
