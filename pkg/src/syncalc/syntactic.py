"""Deterministic reducer for the syntactic calculus (memory as blocks).

A term is split into a maximal evaluation context, represented as a list
of frames from the root down, and the subterm at its hole.  ``step`` then
picks one rule by a fixed priority.  Every session owns a ``FreshSupply``
so names introduced by ``new`` and ``invk`` are never reused.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import (THIS, Block, BlockValue, ClassTable, Decl, DeclType, Expr, FieldAccess,
                    FieldAssign, FreshSupply, Ident, IntValue, Invoke, New, NotValue, Var,
                    VarValue, all_idents, atomic, block_annotation, classify_value, free_vars,
                    freshen, is_capsule, is_dv, is_value, reduct, rename_binders, rename_free,
                    subst_value)
from .congruence import normalize

# ---------------------------------------------------------------------------
# Context frames


@dataclass(frozen=True)
class FieldAccessRecv:
    field: str

    def plug(self, h: Expr) -> Expr:
        return FieldAccess(h, self.field)


@dataclass(frozen=True)
class FieldAssignRecv:
    field: str
    rhs: Expr

    def plug(self, h: Expr) -> Expr:
        return FieldAssign(h, self.field, self.rhs)


@dataclass(frozen=True)
class FieldAssignRhs:
    recv: Expr
    field: str

    def plug(self, h: Expr) -> Expr:
        return FieldAssign(self.recv, self.field, h)


@dataclass(frozen=True)
class NewArg:
    cls: str
    done: tuple[Expr, ...]
    pending: tuple[Expr, ...]

    def plug(self, h: Expr) -> Expr:
        return New(self.cls, self.done + (h,) + self.pending)


@dataclass(frozen=True)
class InvokeRecv:
    method: str
    args: tuple[Expr, ...]

    def plug(self, h: Expr) -> Expr:
        return Invoke(h, self.method, self.args)


@dataclass(frozen=True)
class InvokeArg:
    recv: Expr
    method: str
    done: tuple[Expr, ...]
    pending: tuple[Expr, ...]

    def plug(self, h: Expr) -> Expr:
        return Invoke(self.recv, self.method, self.done + (h,) + self.pending)


@dataclass(frozen=True)
class BlockDecl:
    before: tuple[Decl, ...]
    dtype: DeclType
    var: Ident
    after: tuple[Decl, ...]
    body: Expr
    annot: frozenset[Ident]

    def plug(self, h: Expr) -> Expr:
        return Block(self.before + (Decl(self.dtype, self.var, h),) + self.after,
                     self.body, self.annot)

    def declared(self) -> set[Ident]:
        return {d.var for d in self.before} | {self.var} | {d.var for d in self.after}

    def dvs(self) -> list[Decl]:
        return list(self.before) + [d for d in self.after if is_dv(d)]


@dataclass(frozen=True)
class BlockBody:
    decls: tuple[Decl, ...]
    annot: frozenset[Ident]

    def plug(self, h: Expr) -> Expr:
        return Block(self.decls, h, self.annot)

    def declared(self) -> set[Ident]:
        return {d.var for d in self.decls}

    def dvs(self) -> list[Decl]:
        return list(self.decls)


Frame = Union[FieldAccessRecv, FieldAssignRecv, FieldAssignRhs, NewArg, InvokeRecv,
              InvokeArg, BlockDecl, BlockBody]
VALUE_FRAMES = (FieldAccessRecv, FieldAssignRecv, FieldAssignRhs, NewArg, InvokeRecv)
BLOCK_FRAMES = (BlockDecl, BlockBody)


@dataclass(frozen=True)
class Decomposition:
    path: tuple[Frame, ...]
    hole: Expr

    def plug(self, h: Optional[Expr] = None) -> Expr:
        return plug(self.path, self.hole if h is None else h)


def plug(path, h: Expr) -> Expr:
    for fr in reversed(path):
        h = fr.plug(h)
    return h


def decompose(e: Expr) -> Decomposition:
    """Unique maximal decomposition of ``e``."""
    path: list[Frame] = []
    while True:
        nxt = _descend(e)
        if nxt is None:
            return Decomposition(tuple(path), e)
        fr, e = nxt
        path.append(fr)


def _descend(e: Expr) -> Optional[tuple[Frame, Expr]]:
    if is_value(e):
        return None
    match e:
        case FieldAccess(r, f):
            if not isinstance(r, Var):
                return FieldAccessRecv(f), r
        case FieldAssign(r, f, rhs):
            if not isinstance(r, Var):
                return FieldAssignRecv(f, rhs), r
            if not atomic(rhs):
                return FieldAssignRhs(r, f), rhs
        case New(c, args):
            for k, a in enumerate(args):
                if not atomic(a):
                    return NewArg(c, args[:k], args[k + 1:]), a
        case Invoke(r, m, args):
            if not isinstance(r, Var):
                return InvokeRecv(m, args), r
            for k, a in enumerate(args):
                if not is_value(a):
                    return InvokeArg(r, m, args[:k], args[k + 1:]), a
        case Block(decls, body, annot):
            annot = annot or frozenset()
            for k, d in enumerate(decls):
                if not is_dv(d):
                    fr = BlockDecl(decls[:k], d.dtype, d.var, decls[k + 1:], body, annot)
                    return fr, d.init
            return BlockBody(decls, annot), body
    return None


def hole_binders(path) -> set[Ident]:
    out: set[Ident] = set()
    for fr in path:
        if isinstance(fr, BLOCK_FRAMES):
            out |= fr.declared()
    return out


@dataclass(frozen=True)
class Lookup:
    frame_index: int
    decl: Decl
    inner: frozenset[Ident]


def lookup_enclosing(path, x: Ident) -> Optional[Lookup]:
    """Innermost block frame declaring ``x``; its dv for ``x`` and the
    binders strictly below that frame.  None when ``x`` is free there or
    not yet evaluated."""
    for k in range(len(path) - 1, -1, -1):
        fr = path[k]
        if isinstance(fr, BLOCK_FRAMES) and x in fr.declared():
            for d in fr.dvs():
                if d.var == x:
                    return Lookup(k, d, frozenset(hole_binders(path[k + 1:])))
            return None
    return None


# ---------------------------------------------------------------------------
# Outcomes


@dataclass(frozen=True)
class CapsuleCheckFailed:
    var: Ident
    value: Expr

    def message(self) -> str:
        from .printer import render
        fv = ", ".join(str(z) for z in sorted(free_vars(self.value)))
        why = f"free variables {fv}" if fv else "not a block value"
        return f"capsule check failed for affine {self.var}: {render(self.value)} ({why})"


@dataclass(frozen=True)
class NoApplicableRule:
    detail: str

    def message(self) -> str:
        return f"no applicable rule: {self.detail}"


@dataclass(frozen=True)
class Done:
    value: Expr


@dataclass(frozen=True)
class Step:
    term: Expr
    rule: str


@dataclass(frozen=True)
class Stuck:
    reason: Union[CapsuleCheckFailed, NoApplicableRule]


StepOutcome = Union[Done, Step, Stuck]

RULES = ("new", "field-access", "field-assign", "invk", "alias-elim", "affine-elim",
         "garbage", "move-dec", "move-body", "move-subterm", "move-open",
         "cong-block-elim", "cong-alpha")


# ---------------------------------------------------------------------------
# Session


@dataclass
class Session:
    ct: ClassTable
    supply: FreshSupply = field(default_factory=FreshSupply)
    policy: str = "reach"

    def prepare(self, e: Expr) -> Expr:
        """Make binders globally unique, then reserve every name in sight."""
        e = freshen(e, FreshSupply(free_vars(e) | self.supply.used))
        self.supply.reserve(all_idents(e))
        for c in self.ct.classes.values():
            for sig in c.methods.values():
                self.supply.reserve(all_idents(sig.body))
                self.supply.reserve(p.var for p in sig.params)
        self.supply.reserve([Ident(THIS)])
        return e


def _with_block(decls, body, annot) -> Expr:
    return Block(tuple(decls), body, frozenset(annot)) if decls else body


def _collapse(e: Expr) -> Expr:
    return normalize(e, reorder=False)


def movable(dvs: list[Decl], others: set[Ident], exclude: frozenset = frozenset()) -> list[Decl]:
    """Largest subset S of ``dvs`` with FV(S) disjoint from the binders that stay
    behind (``others`` plus the dvs not in S), skipping ``exclude``."""
    s = [d for d in dvs if d.var not in exclude]
    while True:
        staying = others | {d.var for d in dvs if d not in s}
        s2 = [d for d in s if not (free_vars(d.init) & staying)]
        if len(s2) == len(s):
            return s
        s = s2


def step(e: Expr, session: Session) -> StepOutcome:
    ct = session.ct
    deco = decompose(e)
    path, hole = deco.path, deco.hole

    # empty blocks on the path are removed first
    for k, fr in enumerate(path):
        if isinstance(fr, BlockBody) and not fr.decls:
            return Step(plug(path[:k], plug(path[k + 1:], hole)), "cong-block-elim")

    if not path and is_value(hole):
        return Done(hole)

    match hole:
        case New(c, args) if all(atomic(a) for a in args):
            if c not in ct or len(args) != len(ct.fields(c)):
                return Stuck(NoApplicableRule(f"bad constructor call new {c}/{len(args)}"))
            x = session.supply.fresh(c[:1].lower() + c[1:])
            blk = Block((Decl(DeclType(c), x, hole),), Var(x), frozenset({x}))
            return _finish(plug(path, blk), "new")
        case FieldAccess(Var(x), f):
            return _field_access(path, x, f, ct)
        case FieldAssign(Var(x), f, rhs) if atomic(rhs):
            return _field_assign(path, hole, x, f, rhs, ct)
        case Invoke(Var(x), m, args) if all(is_value(a) for a in args):
            return _invk(path, x, m, args, session)

    v = classify_value(hole)
    if isinstance(v, NotValue):
        return Stuck(NoApplicableRule(f"cannot reduce {type(hole).__name__} here"))
    fr = path[-1]
    outer = path[:-1]
    if isinstance(fr, VALUE_FRAMES):
        if isinstance(v, BlockValue):
            return _move_subterm(outer, fr, hole)
        return Stuck(NoApplicableRule("a non-object value used as receiver"))
    if isinstance(fr, InvokeArg):
        return Stuck(NoApplicableRule("unexpected value hole"))
    if isinstance(fr, BlockDecl):
        return _at_decl(outer, fr, hole, v, session)
    assert isinstance(fr, BlockBody)
    if isinstance(v, BlockValue):
        return _move_out(outer, fr, hole, list(v.dvs), "move-body")
    return _garbage(outer, fr, hole)


def _finish(e: Expr, rule: str) -> Step:
    return Step(_collapse(e), rule)


def _field_access(path, x: Ident, f: str, ct: ClassTable) -> StepOutcome:
    lk = lookup_enclosing(path, x)
    if lk is None:
        return Stuck(NoApplicableRule(f"{x} has no evaluated declaration in scope"))
    new = lk.decl.init
    i = ct.field_index(new.cls, f)
    if i is None:
        return Stuck(NoApplicableRule(f"class {new.cls} has no field {f}"))
    xi = new.args[i]
    if isinstance(xi, Var) and xi.x in lk.inner:
        return Stuck(NoApplicableRule(f"{xi.x} would be captured"))
    return _finish(plug(path, xi), "field-access")


def _replace_dv(fr, decl: Decl, new_init: Expr):
    def upd(ds):
        return tuple(Decl(d.dtype, d.var, new_init) if d.var == decl.var else d for d in ds)
    if isinstance(fr, BlockBody):
        return BlockBody(upd(fr.decls), fr.annot)
    return BlockDecl(upd(fr.before), fr.dtype, fr.var, upd(fr.after), fr.body, fr.annot)


def _field_assign(path, hole: Expr, x: Ident, f: str, rhs: Expr,
                  ct: ClassTable) -> StepOutcome:
    lk = lookup_enclosing(path, x)
    if lk is None:
        return Stuck(NoApplicableRule(f"{x} has no evaluated declaration in scope"))
    new = lk.decl.init
    i = ct.field_index(new.cls, f)
    if i is None:
        return Stuck(NoApplicableRule(f"class {new.cls} has no field {f}"))
    if isinstance(rhs, Var) and rhs.x in lk.inner:
        return _hoist(path, hole, lk.frame_index, rhs.x)
    args = new.args[:i] + (rhs,) + new.args[i + 1:]
    k = lk.frame_index
    path2 = path[:k] + (_replace_dv(path[k], lk.decl, New(new.cls, args)),) + path[k + 1:]
    return _finish(plug(path2, rhs), "field-assign")


def _hoist(path, hole: Expr, k: int, y: Ident) -> StepOutcome:
    """Move the dvs of the block declaring ``y`` (below frame ``k``) one level out."""
    j = next(j for j in range(len(path) - 1, k, -1)
             if isinstance(path[j], BLOCK_FRAMES) and y in path[j].declared())
    fr = path[j]
    dvs = fr.dvs()
    if y not in {d.var for d in dvs}:
        return Stuck(NoApplicableRule(f"{y} is not evaluated yet"))
    blk = plug(path[j:j + 1], plug(path[j + 1:], hole))
    parent = path[j - 1]
    staying = fr.declared() - {d.var for d in dvs}
    exclude: frozenset = frozenset()
    if isinstance(parent, BlockDecl) and parent.dtype.affine:
        exclude = blk.annot or frozenset()
    s = movable(dvs, staying, exclude)
    if y not in {d.var for d in s}:
        if y in exclude:
            return Stuck(CapsuleCheckFailed(parent.var, blk))
        return Stuck(NoApplicableRule(f"declaration of {y} cannot leave its block"))
    return _move_out(path[:j - 1], parent, blk, s, "move-open")


def _move_out(outer, parent, blk: Block, s: list[Decl], open_rule: str) -> Step:
    """Relocate ``s`` (dvs of ``blk``) into the block enclosing ``blk``, or wrap
    the parent frame in a new block when it is not a block frame."""
    moved = frozenset(d.var for d in s)
    x = blk.annot or frozenset()
    remaining = [d for d in blk.decls if d.var not in moved]
    inner = _with_block(remaining, blk.body, x - moved)
    if isinstance(parent, BlockBody):
        new = Block(parent.decls + tuple(s), inner, parent.annot | (x & moved))
        rule = "move-body"
    elif isinstance(parent, BlockDecl):
        new = Block(parent.before + tuple(s) + (Decl(parent.dtype, parent.var, inner),)
                    + parent.after, parent.body, parent.annot | (x & moved))
        rule = "move-dec"
    else:
        new = Block(tuple(s), parent.plug(inner), x & moved)
        rule = open_rule
    return _finish(plug(outer, new), rule)


def _move_subterm(outer, fr, hole: Block) -> Step:
    return _move_out(outer, fr, hole, list(hole.decls), "move-subterm")


def _at_decl(outer, fr: BlockDecl, hole: Expr, v, session: Session) -> StepOutcome:
    x = fr.var
    others = fr.before + fr.after
    if fr.dtype.affine:
        if isinstance(v, IntValue) or (isinstance(v, BlockValue) and is_capsule(hole)):
            tmp = subst_value(Block(others, fr.body, frozenset()), hole, x, session.supply)
            return _finish(plug(outer, _with_block(tmp.decls, tmp.body, fr.annot - {x})),
                           "affine-elim")
        if isinstance(v, BlockValue):
            s = movable(list(v.dvs), set(), v.annot)
            if s:
                return _move_out(outer, fr, hole, s, "move-dec")
        return Stuck(CapsuleCheckFailed(x, hole))
    if isinstance(v, BlockValue):
        return _move_out(outer, fr, hole, list(v.dvs), "move-dec")
    tmp = rename_free(Block(others, fr.body, frozenset()), {x: hole})
    annot = fr.annot - {x}
    if isinstance(v, VarValue) and x in fr.annot and v.x in {d.var for d in others}:
        annot = annot | {v.x}
    return _finish(plug(outer, _with_block(tmp.decls, tmp.body, annot)), "alias-elim")


def _garbage(outer, fr: BlockBody, hole: Expr) -> StepOutcome:
    keep = reduct(fr.decls, hole)
    if len(keep) == len(fr.decls):
        return Stuck(NoApplicableRule("nothing to collect"))
    removed = {d.var for d in fr.decls} - {d.var for d in keep}
    return _finish(plug(outer, _with_block(keep, hole, fr.annot - removed)), "garbage")


def _invk(path, x: Ident, m: str, args, session: Session) -> StepOutcome:
    lk = lookup_enclosing(path, x)
    if lk is None:
        return Stuck(NoApplicableRule(f"{x} has no evaluated declaration in scope"))
    cls = lk.decl.init.cls
    sig = session.ct.method(cls, m)
    if sig is None:
        return Stuck(NoApplicableRule(f"class {cls} has no method {m}"))
    if len(sig.params) != len(args):
        return Stuck(NoApplicableRule(f"method {cls}.{m} arity mismatch"))
    sup = session.supply
    this = sup.fresh(THIS)
    ren: dict[Ident, Expr] = {Ident(THIS): Var(this)}
    decls = [Decl(DeclType(cls), this, Var(x))]
    for p, a in zip(sig.params, args):
        p2 = sup.fresh(p.var)
        ren[p.var] = Var(p2)
        decls.append(Decl(p.dtype, p2, a))
    body = rename_free(rename_binders(sig.body, sup), ren)
    blk = Block(tuple(decls), body, block_annotation(tuple(decls), body, session.policy))
    return _finish(plug(path, blk), "invk")


# ---------------------------------------------------------------------------
# Runs


@dataclass(frozen=True)
class FuelExhausted:
    fuel: int


@dataclass
class Run:
    initial: Expr
    steps: list[tuple[str, Expr]]
    outcome: Union[Done, Stuck, FuelExhausted]

    @property
    def final(self) -> Expr:
        return self.steps[-1][1] if self.steps else self.initial

    @property
    def rules(self) -> list[str]:
        return [r for r, _ in self.steps]


def run(e: Expr, ct: ClassTable, fuel: int = 1000, policy: str = "reach",
        session: Optional[Session] = None) -> Run:
    session = session or Session(ct, policy=policy)
    cur = start = session.prepare(e)
    steps: list[tuple[str, Expr]] = []
    for _ in range(fuel):
        out = step(cur, session)
        if not isinstance(out, Step):
            return Run(start, steps, out)
        steps.append((out.rule, out.term))
        cur = out.term
    out = step(cur, session)
    if isinstance(out, Done):
        return Run(start, steps, out)
    return Run(start, steps, FuelExhausted(fuel))
