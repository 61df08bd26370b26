"""Independent rule-instance checker for syntactic reduction steps.

Given ``before``, ``after`` and a rule name, search every evaluation
context of (a congruent normal form of) ``before`` for an instance of the
rule whose result is congruent to ``after``.  Nothing here reuses the
scheduler: contexts are enumerated from the grammar directly and the rule
right-hand sides are rebuilt from their definitions.
"""

from __future__ import annotations

import itertools
from typing import Iterator

from .congruence import congruent, normalize
from .terms import (Block, ClassTable, Decl, DeclType, Expr, FieldAccess, FieldAssign, Ident,
                    IntLit, Invoke, New, Var, atomic, dom, free_vars, free_vars_decls,
                    is_block_value, is_capsule, is_dv, is_value, rename_free, subst_value)

# frames: ("fa", f) ("asgl", f, rhs) ("asgr", x, f) ("new", C, done, pend)
#         ("invr", m, args) ("inva", x, m, done, pend)
#         ("bdecl", dvs, dtype, var, rest, body, annot) ("bbody", dvs, annot)


def _plug1(fr, h: Expr) -> Expr:
    tag = fr[0]
    if tag == "fa":
        return FieldAccess(h, fr[1])
    if tag == "asgl":
        return FieldAssign(h, fr[1], fr[2])
    if tag == "asgr":
        return FieldAssign(fr[1], fr[2], h)
    if tag == "new":
        return New(fr[1], fr[2] + (h,) + fr[3])
    if tag == "invr":
        return Invoke(h, fr[1], fr[2])
    if tag == "inva":
        return Invoke(fr[1], fr[2], fr[3] + (h,) + fr[4])
    if tag == "bdecl":
        _, dvs, dt, x, rest, body, annot = fr
        return Block(dvs + (Decl(dt, x, h),) + rest, body, annot)
    _, dvs, annot = fr
    return Block(dvs, h, annot)


def _plug(frames, h: Expr) -> Expr:
    for fr in reversed(frames):
        h = _plug1(fr, h)
    return h


def contexts(e: Expr, frames=()) -> Iterator[tuple[tuple, Expr]]:
    """All (context, subterm) splits allowed by the evaluation-context grammar."""
    yield frames, e
    match e:
        case FieldAccess(r, f):
            yield from contexts(r, frames + (("fa", f),))
        case FieldAssign(r, f, rhs):
            yield from contexts(r, frames + (("asgl", f, rhs),))
            if isinstance(r, Var):
                yield from contexts(rhs, frames + (("asgr", r, f),))
        case New(c, args):
            for k, a in enumerate(args):
                yield from contexts(a, frames + (("new", c, args[:k], args[k + 1:]),))
                if not atomic(a):
                    break
        case Invoke(r, m, args):
            yield from contexts(r, frames + (("invr", m, args),))
            if isinstance(r, Var):
                for k, a in enumerate(args):
                    yield from contexts(a, frames + (("inva", r, m, args[:k], args[k + 1:]),))
                    if not is_value(a):
                        break
        case Block(decls, body, annot):
            k = 0
            while k < len(decls) and is_dv(decls[k]):
                k += 1
            if k < len(decls):
                d = decls[k]
                fr = ("bdecl", decls[:k], d.dtype, d.var, decls[k + 1:], body, annot)
                yield from contexts(d.init, frames + (fr,))
            else:
                yield from contexts(body, frames + (("bbody", decls, annot),))


def _frame_decls(fr) -> list[Decl]:
    if fr[0] == "bdecl":
        return list(fr[1]) + [Decl(fr[2], fr[3], Var(fr[3]))] + list(fr[4])
    if fr[0] == "bbody":
        return list(fr[1])
    return []


def _enclosing(frames, x: Ident):
    """Index of the innermost block frame declaring ``x``, its dv, inner binders."""
    for k in range(len(frames) - 1, -1, -1):
        ds = _frame_decls(frames[k])
        if x in dom(ds):
            dvs = frames[k][1]
            for d in dvs:
                if d.var == x:
                    inner = set()
                    for fr in frames[k + 1:]:
                        inner |= dom(_frame_decls(fr))
                    return k, d, inner
            return None
    return None


def _subsets(ds: list[Decl]) -> Iterator[list[Decl]]:
    if len(ds) <= 6:
        for r in range(1, len(ds) + 1):
            yield from (list(c) for c in itertools.combinations(ds, r))
    else:
        yield list(ds)
        for d in ds:
            yield [d]


def _fresh(e: Expr, base: str) -> Ident:
    from .terms import all_idents
    used = all_idents(e)
    k = 0
    while Ident(f"{base}_chk{k}") in used:
        k += 1
    return Ident(f"{base}_chk{k}")


def _candidates(rule: str, whole: Expr, frames, t: Expr, ct: ClassTable) -> Iterator[Expr]:
    """Results of applying ``rule`` at this split (possibly several)."""
    if rule == "new":
        if isinstance(t, New) and all(atomic(a) for a in t.args):
            if frames and frames[-1][0] == "bdecl" and not frames[-1][2].affine:
                return
            x = _fresh(whole, "n")
            yield _plug(frames, Block((Decl(DeclType(t.cls), x, t),), Var(x), frozenset({x})))
    elif rule in ("field-access", "field-assign", "invk"):
        yield from _member_rules(rule, frames, t, ct, whole)
    elif rule in ("alias-elim", "affine-elim", "garbage", "move-dec", "move-body"):
        if isinstance(t, Block):
            for r in _block_rules(rule, t):
                yield _plug(frames, r)
    elif rule in ("move-subterm", "move-open"):
        for r in _subterm_rules(rule, t):
            yield _plug(frames, r)


def _member_rules(rule, frames, t, ct, whole) -> Iterator[Expr]:
    if rule == "field-access" and isinstance(t, FieldAccess) and isinstance(t.recv, Var):
        hit = _enclosing(frames, t.recv.x)
        if hit:
            _, d, inner = hit
            i = ct.field_index(d.init.cls, t.field)
            if i is not None:
                xi = d.init.args[i]
                if not (isinstance(xi, Var) and xi.x in inner):
                    yield _plug(frames, xi)
    elif rule == "field-assign" and isinstance(t, FieldAssign) and isinstance(t.recv, Var) \
            and atomic(t.rhs):
        hit = _enclosing(frames, t.recv.x)
        if hit:
            k, d, inner = hit
            i = ct.field_index(d.init.cls, t.field)
            if i is not None and not (isinstance(t.rhs, Var) and t.rhs.x in inner):
                args = d.init.args[:i] + (t.rhs,) + d.init.args[i + 1:]
                nd = Decl(d.dtype, d.var, New(d.init.cls, args))
                fr = list(frames[k])
                fr[1] = tuple(nd if x.var == d.var else x for x in fr[1])
                frames2 = frames[:k] + (tuple(fr),) + frames[k + 1:]
                yield _plug(frames2, t.rhs)
    elif rule == "invk" and isinstance(t, Invoke) and isinstance(t.recv, Var) \
            and all(is_value(a) for a in t.args):
        hit = _enclosing(frames, t.recv.x)
        if hit:
            _, d, _ = hit
            sig = ct.method(d.init.cls, t.method)
            if sig is not None and len(sig.params) == len(t.args):
                this = _fresh(whole, "this")
                ren = {Ident("this"): Var(this)}
                decls = [Decl(DeclType(d.init.cls), this, t.recv)]
                for p, a in zip(sig.params, t.args):
                    p2 = _fresh(whole, p.var.name + "_" + str(len(ren)))
                    ren[p.var] = Var(p2)
                    decls.append(Decl(p.dtype, p2, a))
                yield _plug(frames, Block(tuple(decls), rename_free(sig.body, ren), frozenset()))


def _block_rules(rule: str, b: Block) -> Iterator[Expr]:
    decls, body = list(b.decls), b.body
    annot = b.annot or frozenset()
    k = 0
    while k < len(decls) and is_dv(decls[k]):
        k += 1
    dvs, rest = decls[:k], decls[k:]
    if rule in ("alias-elim", "affine-elim") and rest:
        d = rest[0]
        tail = Block(tuple(rest[1:]), body, frozenset())
        if rule == "alias-elim" and not d.dtype.affine and atomic(d.init):
            r = rename_free(tail, {d.var: d.init})
            yield _mk(dvs + list(r.decls), r.body, annot - {d.var})
            # extension: occurrences inside the dv prefix are substituted too
            r2 = rename_free(Block(tuple(dvs) + tuple(rest[1:]), body, frozenset()),
                             {d.var: d.init})
            yield _mk(list(r2.decls), r2.body, annot - {d.var})
        if rule == "affine-elim" and d.dtype.affine and (
                is_capsule(d.init) or isinstance(d.init, IntLit)):
            r = subst_value(Block(tuple(dvs) + tuple(rest[1:]), body, frozenset()), d.init, d.var)
            yield _mk(list(r.decls), r.body, annot - {d.var})
    elif rule == "garbage":
        for s in _subsets(dvs):
            gone = dom(s)
            keep = [d for d in decls if d.var not in gone]
            if not ((free_vars_decls(keep) | free_vars(body)) & gone):
                yield _mk(keep, body, annot - gone)
    elif rule == "move-dec" and rest and isinstance(rest[0].init, Block):
        d = rest[0]
        inner = rest[0].init
        for s in _inner_moves(inner, d.dtype.affine):
            moved = dom(s)
            remaining = [x for x in inner.decls if x.var not in moved]
            nd = Decl(d.dtype, d.var, _mk(remaining, inner.body, (inner.annot or frozenset()) - moved))
            outer_fv = free_vars_decls(dvs + rest[1:]) | free_vars(body)
            if not (outer_fv & moved):
                yield _mk(dvs + s + [nd] + rest[1:], body, annot | ((inner.annot or frozenset()) & moved))
    elif rule == "move-body" and not rest and isinstance(body, Block):
        for s in _inner_moves(body, False):
            moved = dom(s)
            remaining = [x for x in body.decls if x.var not in moved]
            if not (free_vars_decls(dvs) & moved):
                iannot = body.annot or frozenset()
                yield _mk(dvs + s, _mk(remaining, body.body, iannot - moved), annot | (iannot & moved))


def _inner_moves(inner: Block, affine: bool) -> Iterator[list[Decl]]:
    dvs = [d for d in inner.decls if is_dv(d)]
    x = inner.annot or frozenset()
    for s in _subsets(dvs):
        moved = dom(s)
        staying = dom(inner.decls) - moved
        if free_vars_decls(s) & staying:
            continue
        if affine and moved & x:
            continue
        yield s


def _subterm_rules(rule: str, t: Expr) -> Iterator[Expr]:
    """One-frame contexts around a block: value contexts for move-subterm, any
    non-block frame for move-open."""
    splits = []
    match t:
        case FieldAccess(r, f):
            splits.append((r, lambda h, f=f: FieldAccess(h, f)))
        case FieldAssign(r, f, rhs):
            splits.append((r, lambda h, f=f, rhs=rhs: FieldAssign(h, f, rhs)))
            if isinstance(r, Var):
                splits.append((rhs, lambda h, r=r, f=f: FieldAssign(r, f, h)))
        case New(c, args):
            for k, a in enumerate(args):
                splits.append((a, lambda h, c=c, k=k, args=args: New(c, args[:k] + (h,) + args[k + 1:])))
                if not atomic(a):
                    break
        case Invoke(r, m, args):
            splits.append((r, lambda h, m=m, args=args: Invoke(h, m, args)))
            if rule == "move-open" and isinstance(r, Var):
                for k, a in enumerate(args):
                    splits.append((a, lambda h, r=r, m=m, k=k, args=args:
                                   Invoke(r, m, args[:k] + (h,) + args[k + 1:])))
                    if not is_value(a):
                        break
    for b, frame in splits:
        if not isinstance(b, Block):
            continue
        if rule == "move-subterm" and not is_block_value(b):
            continue
        x = b.annot or frozenset()
        ctx_fv = free_vars(frame(IntLit(0)))
        for s in _inner_moves(Block(b.decls, b.body, frozenset()), False):
            moved = dom(s)
            if ctx_fv & moved:
                continue
            remaining = [d for d in b.decls if d.var not in moved]
            yield _mk(s, frame(_mk(remaining, b.body, x - moved)), x & moved)


def _mk(decls, body, annot) -> Expr:
    return Block(tuple(decls), body, frozenset(annot))


def check_step(before: Expr, after: Expr, rule: str, ct: ClassTable) -> bool:
    """True when ``before -> after`` is an instance of ``rule`` up to congruence."""
    if rule in ("cong-block-elim", "cong-alpha"):
        return congruent(before, after, ignore_annot=True)
    n = normalize(before)
    for frames, t in contexts(n):
        for cand in _candidates(rule, n, frames, t, ct):
            if congruent(cand, after, ignore_annot=True):
                return True
    return False


def check_trace(initial: Expr, steps, ct: ClassTable) -> list[int]:
    """Indices of trace steps that are not rule instances."""
    bad = []
    prev = initial
    for i, (rule, term) in enumerate(steps):
        if not check_step(prev, term, rule, ct):
            bad.append(i)
        prev = term
    return bad
