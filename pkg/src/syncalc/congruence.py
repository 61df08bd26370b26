"""Congruence of terms: alpha-renaming, empty-block elimination and reordering
of evaluated declarations.

``canonicalize`` gives a deterministic representative that is cheap to
compare.  ``congruent`` first compares canonical forms and, when they
differ, falls back to an exact search for a binder bijection that also
permutes evaluated declarations, so it never reports a false negative
caused by a tie in the canonical ordering.
"""

from __future__ import annotations

import itertools
from dataclasses import replace
from typing import Iterator, Optional

from .terms import (Block, Decl, Expr, FieldAccess, FieldAssign, Ident, IntLit, Invoke,
                    New, Oid, Var, children, free_vars, is_dv, split_dvs)

Bij = tuple[dict, dict]


def normalize(e: Expr, reorder: bool = True) -> Expr:
    """Collapse empty blocks everywhere and (with ``reorder``) put each block's
    evaluated declarations first, keeping relative order."""
    match e:
        case Var() | Oid() | IntLit():
            return e
        case FieldAccess(r, f):
            return FieldAccess(normalize(r, reorder), f)
        case FieldAssign(r, f, rhs):
            return FieldAssign(normalize(r, reorder), f, normalize(rhs, reorder))
        case New(c, args):
            return New(c, tuple(normalize(a, reorder) for a in args))
        case Invoke(r, m, args):
            return Invoke(normalize(r, reorder), m, tuple(normalize(a, reorder) for a in args))
        case Block(decls, body, annot):
            body = normalize(body, reorder)
            if not decls:
                return body
            decls = tuple(replace(d, init=normalize(d.init, reorder)) for d in decls)
            if reorder:
                dvs, rest = split_dvs(decls)
                decls = dvs + rest
            return Block(decls, body, annot)
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Canonical forms


def _canon_name(k: int) -> Ident:
    return Ident(f"%{k}")


def _uses(e: Expr, targets: set[Ident], out: list[Ident]) -> None:
    """Occurrences of ``targets`` in a name-independent traversal order:
    unevaluated parts of nested blocks first, nested dvs by discovery."""
    match e:
        case Var(x):
            if x in targets:
                out.append(x)
            return
        case Block(decls, body, _):
            inner = targets - {d.var for d in decls}
            dvs, rest = split_dvs(decls)
            for d in rest:
                _uses(d.init, inner, out)
            _uses(body, inner, out)
            for d in _dv_order(decls, body, set()):
                if is_dv(d):
                    _uses(d.init, inner, out)
            return
    for c in children(e):
        _uses(c, targets, out)


def _dv_order(decls: tuple[Decl, ...], body: Expr, outer: set[Ident]) -> list[Decl]:
    dvs, rest = split_dvs(decls)
    by_var = {d.var: d for d in dvs}
    targets = set(by_var)
    found: list[Ident] = []
    seen: set[Ident] = set()

    def visit(xs):
        for x in xs:
            if x not in seen:
                seen.add(x)
                found.append(x)

    occ: list[Ident] = []
    for d in rest:
        _uses(d.init, targets, occ)
    _uses(body, targets, occ)
    visit(occ)
    i = 0
    while True:
        while i < len(found):
            args = [a.x for a in by_var[found[i]].init.args if isinstance(a, Var)]
            visit(a for a in args if a in targets)
            i += 1
        remaining = [x for x in by_var if x not in seen]
        if not remaining:
            break
        pos = {x: k for k, x in enumerate(found)}

        def key(x):
            d = by_var[x]
            toks = []
            for a in d.init.args:
                if isinstance(a, IntLit):
                    toks.append((0, str(a.n)))
                elif a.x in pos:
                    toks.append((1, str(pos[a.x])))
                elif a.x in targets:
                    toks.append((2, ""))
                elif a.x in outer:
                    toks.append((3, ""))
                else:
                    toks.append((4, str(a.x)))
            return (d.init.cls, tuple(toks), x)

        visit([min(remaining, key=key)])
    order = [by_var[x] for x in found]
    return order + list(rest)


def canonicalize(e: Expr, reorder: bool = True, ignore_annot: bool = False) -> Expr:
    """Deterministic representative of the congruence class of ``e``.

    Binders are renamed ``%0, %1, ...`` in traversal order; free variables
    keep their names."""
    n = normalize(e, reorder)
    return _canon(n, {}, [0], reorder, ignore_annot)


def _canon(e: Expr, env: dict[Ident, Ident], counter: list[int], reorder: bool,
           ignore_annot: bool) -> Expr:
    def go(t):
        return _canon(t, env, counter, reorder, ignore_annot)

    match e:
        case Var(x):
            return Var(env.get(x, x))
        case Oid() | IntLit():
            return e
        case FieldAccess(r, f):
            return FieldAccess(go(r), f)
        case FieldAssign(r, f, rhs):
            return FieldAssign(go(r), f, go(rhs))
        case New(c, args):
            return New(c, tuple(go(a) for a in args))
        case Invoke(r, m, args):
            return Invoke(go(r), m, tuple(go(a) for a in args))
        case Block(decls, body, annot):
            ordered = _dv_order(decls, body, set(env)) if reorder else list(decls)
            env2 = dict(env)
            for d in ordered:
                env2[d.var] = _canon_name(counter[0])
                counter[0] += 1
            new_decls = tuple(Decl(d.dtype, env2[d.var],
                                   _canon(d.init, env2, counter, reorder, ignore_annot))
                              for d in ordered)
            new_body = _canon(body, env2, counter, reorder, ignore_annot)
            if ignore_annot or annot is None:
                new_annot = frozenset()
            else:
                new_annot = frozenset(env2.get(x, x) for x in annot)
            return Block(new_decls, new_body, new_annot)
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Exact decision procedures


def _bind(bij: Bij, x: Ident, y: Ident) -> Optional[Bij]:
    m, mi = bij
    if m.get(x, y) != y or mi.get(y, x) != x:
        return None
    m2, mi2 = dict(m), dict(mi)
    m2[x] = y
    mi2[y] = x
    return m2, mi2


def _var_ok(bij: Bij, x: Ident, y: Ident, bound1: set, bound2: set) -> bool:
    m, mi = bij
    if x in m:
        return m[x] == y
    if y in mi:
        return False
    # both free
    return x == y and x not in bound1 and y not in bound2


def _iso(a: Expr, b: Expr, bij: Bij, reorder: bool, annots: bool) -> Iterator[Bij]:
    """All extensions of ``bij`` under which ``a`` and ``b`` coincide."""
    match a, b:
        case Var(x), Var(y):
            if _var_ok(bij, x, y, set(), set()):
                yield bij
        case Oid(n1), Oid(n2):
            if n1 == n2:
                yield bij
        case IntLit(n1), IntLit(n2):
            if n1 == n2:
                yield bij
        case FieldAccess(r1, f1), FieldAccess(r2, f2):
            if f1 == f2:
                yield from _iso(r1, r2, bij, reorder, annots)
        case FieldAssign(r1, f1, x1), FieldAssign(r2, f2, x2):
            if f1 == f2:
                yield from _iso_seq([r1, x1], [r2, x2], bij, reorder, annots)
        case New(c1, args1), New(c2, args2):
            if c1 == c2 and len(args1) == len(args2):
                yield from _iso_seq(list(args1), list(args2), bij, reorder, annots)
        case Invoke(r1, m1, args1), Invoke(r2, m2, args2):
            if m1 == m2 and len(args1) == len(args2):
                yield from _iso_seq([r1, *args1], [r2, *args2], bij, reorder, annots)
        case Block(), Block():
            yield from _iso_block(a, b, bij, reorder, annots)


def _iso_seq(xs: list[Expr], ys: list[Expr], bij: Bij, reorder: bool,
             annots: bool) -> Iterator[Bij]:
    if not xs:
        yield bij
        return
    for b2 in _iso(xs[0], ys[0], bij, reorder, annots):
        yield from _iso_seq(xs[1:], ys[1:], b2, reorder, annots)


def _iso_block(a: Block, b: Block, bij: Bij, reorder: bool, annots: bool) -> Iterator[Bij]:
    if len(a.decls) != len(b.decls):
        return
    if reorder:
        dvs1, rest1 = split_dvs(a.decls)
        dvs2, rest2 = split_dvs(b.decls)
    else:
        dvs1, rest1, dvs2, rest2 = (), a.decls, (), b.decls
    if len(rest1) != len(rest2) or len(dvs1) != len(dvs2):
        return
    if sorted(d.init.cls for d in dvs1) != sorted(d.init.cls for d in dvs2):
        return
    if any(d1.dtype != d2.dtype for d1, d2 in zip(rest1, rest2)):
        return
    # shadowing: forget outer pairs for names rebound here
    m, mi = bij
    m = {k: v for k, v in m.items() if k not in {d.var for d in a.decls}}
    mi = {k: v for k, v in mi.items() if k not in {d.var for d in b.decls}}
    cur: Optional[Bij] = (m, mi)
    for d1, d2 in zip(rest1, rest2):
        cur = _bind(cur, d1.var, d2.var)
        if cur is None:
            return
    own1 = {d.var for d in dvs1}
    own2 = {d.var for d in dvs2}

    def args_ok(bj: Bij, d1: Decl, d2: Decl) -> bool:
        if d1.dtype != d2.dtype or d1.init.cls != d2.init.cls:
            return False
        if len(d1.init.args) != len(d2.init.args):
            return False
        m_, mi_ = bj
        for x, y in zip(d1.init.args, d2.init.args):
            if isinstance(x, IntLit) or isinstance(y, IntLit):
                if x != y:
                    return False
                continue
            if x.x in m_:
                if m_[x.x] != y.x:
                    return False
            elif x.x in own1:
                if y.x not in own2 or y.x in mi_:
                    return False
            elif y.x in mi_ or y.x in own2 or x.x != y.x:
                return False
        return True

    def assign(i: int, bj: Bij, used: frozenset) -> Iterator[Bij]:
        if i == len(dvs1):
            yield bj
            return
        d1 = dvs1[i]
        for j, d2 in enumerate(dvs2):
            if j in used or d2.init.cls != d1.init.cls:
                continue
            b2 = _bind(bj, d1.var, d2.var)
            if b2 is not None and args_ok(b2, d1, d2):
                yield from assign(i + 1, b2, used | {j})

    local1 = {d.var for d in a.decls}
    local2 = {d.var for d in b.decls}
    for bj in assign(0, cur, frozenset()):
        back = {bj[0][d.var]: d for d in dvs1}
        if not all(args_ok(bj, back[d2.var], d2) for d2 in dvs2):
            continue
        if annots:
            x1 = a.annot or frozenset()
            x2 = b.annot or frozenset()
            if frozenset(bj[0].get(z, z) for z in x1) != x2:
                continue
        for fin in _iso_seq([d.init for d in rest1] + [a.body],
                            [d.init for d in rest2] + [b.body], bj, reorder, annots):
            # drop local pairs, restore any shadowed outer ones
            fm = {k: v for k, v in fin[0].items() if k not in local1}
            fmi = {k: v for k, v in fin[1].items() if k not in local2}
            for k, v in bij[0].items():
                if k in local1:
                    fm[k] = v
                    fmi[v] = k
            yield fm, fmi


def congruent(e1: Expr, e2: Expr, ignore_annot: bool = False, reorder: bool = True) -> bool:
    """Decide congruence.  ``reorder=False`` gives the two-axiom variant
    (alpha, block-elim) used for conventional terms."""
    if canonicalize(e1, reorder, ignore_annot) == canonicalize(e2, reorder, ignore_annot):
        return True
    if free_vars(e1) != free_vars(e2):
        return False
    n1, n2 = normalize(e1, reorder), normalize(e2, reorder)
    return next(_iso(n1, n2, ({}, {}), reorder, not ignore_annot), None) is not None


def alpha_eq(e1: Expr, e2: Expr, ignore_annot: bool = False) -> bool:
    """Equality up to renaming of bound variables only."""
    return next(_iso(e1, e2, ({}, {}), False, not ignore_annot), None) is not None


def conv_congruent(e1: Expr, e2: Expr) -> bool:
    return congruent(e1, e2, ignore_annot=True, reorder=False)


def permutations_of_dvs(b: Block) -> Iterator[Block]:
    """Every reordering of ``b``'s dvs that leaves the other declarations in
    place (used by tests and the rule checker)."""
    slots = [i for i, d in enumerate(b.decls) if is_dv(d)]
    dvs = [b.decls[i] for i in slots]
    for perm in itertools.permutations(dvs):
        ds = list(b.decls)
        for i, d in zip(slots, perm):
            ds[i] = d
        yield Block(tuple(ds), b.body, b.annot)
