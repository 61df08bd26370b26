"""Reference implementations used only by the tests.

They are deliberately naive and share no code with the library beyond the
term constructors.
"""

from __future__ import annotations

import itertools
import random
from collections import deque

from syncalc.terms import (Block, Decl, DeclType, FieldAccess, FieldAssign, Ident, IntLit,
                           Invoke, New, Oid, Var)


def _is_dv(d: Decl) -> bool:
    return (not d.dtype.affine and isinstance(d.init, New)
            and all(isinstance(a, (Var, IntLit)) for a in d.init.args))


def alpha_key(e, env=None, counter=None):
    """Name-independent structural key: binders are numbered in pre-order."""
    env = env or {}
    counter = counter if counter is not None else [0]
    if isinstance(e, Var):
        return ("v", env.get(e.x, ("free", e.x.name, e.x.uid)))
    if isinstance(e, (IntLit, Oid)):
        return (type(e).__name__, e)
    if isinstance(e, FieldAccess):
        return ("fa", alpha_key(e.recv, env, counter), e.field)
    if isinstance(e, FieldAssign):
        return ("as", alpha_key(e.recv, env, counter), e.field, alpha_key(e.rhs, env, counter))
    if isinstance(e, New):
        return ("new", e.cls, tuple(alpha_key(a, env, counter) for a in e.args))
    if isinstance(e, Invoke):
        return ("inv", alpha_key(e.recv, env, counter), e.method,
                tuple(alpha_key(a, env, counter) for a in e.args))
    env2 = dict(env)
    for d in e.decls:
        env2[d.var] = ("b", counter[0])
        counter[0] += 1
    decls = tuple((str(d.dtype), alpha_key(d.init, env2, counter)) for d in e.decls)
    annot = None if e.annot is None else tuple(sorted(env2[x] for x in e.annot))
    return ("blk", decls, alpha_key(e.body, env2, counter), annot)


def _one_step(e):
    """Terms reachable by one reorder (either direction) or one block-elim,
    applied at any position."""
    if isinstance(e, Block):
        ds = list(e.decls)
        if not ds and not e.annot:
            yield e.body
        for i, d in enumerate(ds):
            if _is_dv(d):
                rest = ds[:i] + ds[i + 1:]
                for j in range(len(ds)):
                    if j != i:
                        yield Block(tuple(rest[:j] + [d] + rest[j:]), e.body, e.annot)
        for i, d in enumerate(ds):
            for d2 in _one_step(d.init):
                yield Block(tuple(ds[:i] + [Decl(d.dtype, d.var, d2)] + ds[i + 1:]),
                            e.body, e.annot)
        for b in _one_step(e.body):
            yield Block(e.decls, b, e.annot)
    elif isinstance(e, FieldAccess):
        for r in _one_step(e.recv):
            yield FieldAccess(r, e.field)
    elif isinstance(e, FieldAssign):
        for r in _one_step(e.recv):
            yield FieldAssign(r, e.field, e.rhs)
        for r in _one_step(e.rhs):
            yield FieldAssign(e.recv, e.field, r)
    elif isinstance(e, New):
        for k, a in enumerate(e.args):
            for a2 in _one_step(a):
                yield New(e.cls, e.args[:k] + (a2,) + e.args[k + 1:])
    elif isinstance(e, Invoke):
        for r in _one_step(e.recv):
            yield Invoke(r, e.method, e.args)
        for k, a in enumerate(e.args):
            for a2 in _one_step(a):
                yield Invoke(e.recv, e.method, e.args[:k] + (a2,) + e.args[k + 1:])


def closure(e, depth: int = 6) -> set:
    """Alpha-keys of everything reachable from ``e`` in at most ``depth`` steps."""
    seen = {alpha_key(e)}
    frontier = deque([(e, 0)])
    while frontier:
        t, d = frontier.popleft()
        if d == depth:
            continue
        for t2 in _one_step(t):
            k = alpha_key(t2)
            if k not in seen:
                seen.add(k)
                frontier.append((t2, d + 1))
    return seen


def brute_congruent(e1, e2, depth: int = 6) -> bool:
    return bool(closure(e1, depth) & closure(e2, depth))


# ---------------------------------------------------------------------------
# small term universe over two classes

ORACLE_CLASSES = "class C { C f; } class D { C g; } "


def small_terms(seed: int, count: int, max_blocks: int = 3, max_decls: int = 3):
    """Deterministic sample of blocks with at most ``max_blocks`` blocks and
    ``max_decls`` declarations each; free variable ``o`` has class C."""
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        budget = [max_blocks]
        names = itertools.count(1)
        out.append(_blk(rng, budget, max_decls, [("o", "C")], names))
    return out


def _blk(rng, budget, max_decls, scope, names):
    budget[0] -= 1
    n = rng.randrange(0, max_decls + 1)
    vs = [(f"x{next(names)}", rng.choice("CD")) for _ in range(n)]
    inner = scope + vs
    cs = [Ident(v) for v, c in inner if c == "C"]
    decls = []
    for v, c in vs:
        kind = rng.random()
        if kind < 0.55:
            arg = Var(rng.choice(cs))
            decls.append(Decl(DeclType(c), Ident(v), New(c, (arg,))))
        elif kind < 0.75 and budget[0] > 0:
            sub = _blk(rng, budget, max_decls, inner, names)
            decls.append(Decl(DeclType(c), Ident(v), sub))
        elif c == "C":
            decls.append(Decl(DeclType(c), Ident(v), FieldAccess(Var(rng.choice(cs)), "f")))
        else:
            decls.append(Decl(DeclType(c), Ident(v), New(c, (FieldAccess(Var(rng.choice(cs)), "f"),))))
    if budget[0] > 0 and rng.random() < 0.4:
        body = _blk(rng, budget, max_decls, inner, names)
    else:
        body = Var(rng.choice(cs))
    annot = frozenset() if rng.random() < 0.7 else frozenset(Ident(v) for v, _ in vs[:1])
    return Block(tuple(decls), body, annot)


def scramble(e, rng: random.Random, steps: int = 3):
    """Random walk of congruence steps plus a consistent renaming."""
    for _ in range(steps):
        opts = list(_one_step(e))
        if rng.random() < 0.3:
            opts.append(Block((), e, frozenset()))
        if not opts:
            break
        e = rng.choice(opts)
    return _rename_all(e, rng)


def _rename_all(e, rng):
    from syncalc.terms import rename_binders, FreshSupply
    supply = FreshSupply()
    supply.reserve({Ident("o")})
    return rename_binders(e, supply)


def mutate(e, rng: random.Random):
    """A structural change that usually breaks congruence: swap two adjacent
    declarations or retarget one variable."""
    blocks = []

    def walk(t, path):
        if isinstance(t, Block):
            blocks.append(path)
            for i, d in enumerate(t.decls):
                walk(d.init, path + [("d", i)])
            walk(t.body, path + [("b",)])

    walk(e, [])
    if not blocks:
        o = Var(Ident("o"))
        return Block((Decl(DeclType("C"), Ident("m"), New("C", (o,))),), e, frozenset())
    path = rng.choice(blocks)

    def edit(t, p):
        if not p:
            ds = list(t.decls)
            if len(ds) >= 2 and rng.random() < 0.6:
                i = rng.randrange(len(ds) - 1)
                ds[i], ds[i + 1] = ds[i + 1], ds[i]
                return Block(tuple(ds), t.body, t.annot)
            return Block(t.decls, Var(Ident("o")), t.annot)
        step, rest = p[0], p[1:]
        if step[0] == "d":
            i = step[1]
            d = t.decls[i]
            ds = list(t.decls)
            ds[i] = Decl(d.dtype, d.var, edit(d.init, rest))
            return Block(tuple(ds), t.body, t.annot)
        return Block(t.decls, edit(t.body, rest), t.annot)

    return edit(e, path)


# ---------------------------------------------------------------------------
# conventional invk reference


def invk_by_hand(body, this_serial: int, params, args):
    """Substitute ``this`` and parameters in one pass, as in the FJ rule."""
    ren = {Ident("this"): Oid(this_serial)}
    ren.update(zip(params, args))

    def go(t, bound):
        if isinstance(t, Var):
            return t if t.x in bound else ren.get(t.x, t)
        if isinstance(t, (IntLit, Oid)):
            return t
        if isinstance(t, FieldAccess):
            return FieldAccess(go(t.recv, bound), t.field)
        if isinstance(t, FieldAssign):
            return FieldAssign(go(t.recv, bound), t.field, go(t.rhs, bound))
        if isinstance(t, New):
            return New(t.cls, tuple(go(a, bound) for a in t.args))
        if isinstance(t, Invoke):
            return Invoke(go(t.recv, bound), t.method, tuple(go(a, bound) for a in t.args))
        b2 = bound | {d.var for d in t.decls}
        return Block(tuple(Decl(d.dtype, d.var, go(d.init, b2)) for d in t.decls),
                     go(t.body, b2), t.annot)

    return go(body, frozenset())
