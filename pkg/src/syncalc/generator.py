"""Deterministic random generator of closed, strictly well-formed programs."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .parser import parse_program
from .terms import (INT, Block, ClassTable, Decl, DeclType, Expr, FieldAccess, FieldAssign,
                    Ident, IntLit, Invoke, New, Qualifier, Var, annotate, free_vars,
                    well_formed)

FUZZ_CLASSES = """
class N {
  N next; int v;
  N get() { this.next }
  N set(N n) { this.next = n }
  int val() { this.v }
  int bump(int k) { this.v = k }
  N adopt(a N n) { this.next = n }
}
class P {
  N a; N b;
  N fst() { this.a }
  N deep() { this.a.get() }
  N swap() { { N t = this.a; N u = this.a = this.b; this.b = t } }
  P mk(N n) { new P(n, this.b) }
}
"""


def fuzz_class_table() -> ClassTable:
    return parse_program(FUZZ_CLASSES + " 0").ct


@dataclass
class _V:
    name: Ident
    cls: str
    kind: str  # "dv", "plain" or "affine"


class _Gen:
    def __init__(self, rng: random.Random, ct: ClassTable, max_decls: int):
        self.rng = rng
        self.ct = ct
        self.max_decls = max_decls
        self.counter = 0
        self.used_affine: set[Ident] = set()
        self.classes = sorted(ct.classes)

    def fresh(self, cls: str) -> Ident:
        self.counter += 1
        return Ident(f"{cls.lower()}{self.counter}")

    def usable(self, env: list[_V], cls: str) -> list[_V]:
        return [v for v in env if v.cls == cls
                and (v.kind != "affine" or v.name not in self.used_affine)]

    def use(self, v: _V) -> Expr:
        if v.kind == "affine":
            self.used_affine.add(v.name)
        return Var(v.name)

    def receivers(self, env: list[_V]) -> list[_V]:
        return [v for v in env if v.kind != "affine" and v.cls != INT]

    def expr(self, cls: str, depth: int, env: list[_V]) -> Expr:
        r = self.rng
        opts = ["atom"]
        if depth > 0:
            opts += ["block", "block", "access", "assign", "call"]
            if cls != INT:
                opts.append("new")
        r.shuffle(opts)
        for o in opts:
            e = getattr(self, "_" + o)(cls, depth, env)
            if e is not None:
                return e
        return self._fallback(cls)

    def _fallback(self, cls: str) -> Expr:
        if cls == INT:
            return IntLit(self.rng.randrange(10))
        return self._closed_dv_block(cls)

    def _closed_dv_block(self, cls: str) -> Expr:
        decls, local = self._dv_group([cls], [])
        return Block(tuple(decls), Var(local[0].name))

    def _dv_group(self, classes: list[str], env: list[_V]) -> tuple[list[Decl], list[_V]]:
        """Evaluated declarations for ``classes`` (plus whatever field types
        are missing from ``env``), with arguments drawn from env and group."""
        group = [_V(self.fresh(c), c, "dv") for c in classes]
        have = {v.cls for v in env if v.kind == "dv"} | set(classes)
        todo = list(classes)
        while todo:
            c = todo.pop()
            for t, _ in self.ct.fields(c):
                if t != INT and t not in have:
                    have.add(t)
                    todo.append(t)
                    group.append(_V(self.fresh(t), t, "dv"))
        scope = env + group
        decls = []
        for v in group:
            args = tuple(self._dv_arg(t, scope) for t, _ in self.ct.fields(v.cls))
            decls.append(Decl(DeclType(v.cls), v.name, New(v.cls, args)))
        return decls, group

    def _dv_arg(self, cls: str, env: list[_V]) -> Expr:
        if cls == INT:
            return IntLit(self.rng.randrange(10))
        cands = [v for v in env if v.kind == "dv" and v.cls == cls]
        if not cands:
            return None
        return Var(self.rng.choice(cands).name)

    def _atom(self, cls, depth, env):
        if cls == INT:
            if self.rng.random() < 0.5:
                return IntLit(self.rng.randrange(10))
        vs = self.usable(env, cls)
        if not vs:
            return None
        return self.use(self.rng.choice(vs))

    def _recv_field(self, cls, env):
        pairs = [(v, f) for v in self.receivers(env)
                 for t, f in self.ct.fields(v.cls) if t == cls]
        return self.rng.choice(pairs) if pairs else None

    def _access(self, cls, depth, env):
        p = self._recv_field(cls, env)
        if p is None:
            return None
        return FieldAccess(Var(p[0].name), p[1])

    def _assign(self, cls, depth, env):
        p = self._recv_field(cls, env)
        if p is None:
            return None
        return FieldAssign(Var(p[0].name), p[1], self.expr(cls, depth - 1, env))

    def _call(self, cls, depth, env):
        cands = []
        for v in self.receivers(env):
            for sig in sorted(self.ct.classes[v.cls].methods.values(), key=lambda s: s.name):
                if sig.ret == cls:
                    cands.append((v, sig))
        if not cands:
            return None
        v, sig = self.rng.choice(cands)
        args = []
        for p in sig.params:
            if p.dtype.affine:
                args.append(self._affine_init(p.dtype.cls, depth - 1, env))
            else:
                args.append(self.expr(p.dtype.cls, depth - 1, env))
        return Invoke(Var(v.name), sig.name, tuple(args))

    def _new(self, cls, depth, env):
        args = []
        for t, _ in self.ct.fields(cls):
            if self.rng.random() < 0.5:
                a = self._dv_arg(t, env)
                if a is not None:
                    args.append(a)
                    continue
            args.append(self.expr(t, depth - 1, env))
        if all(isinstance(a, (Var, IntLit)) for a in args):
            # only dv names may appear as arguments of an evaluated declaration
            args = [a if isinstance(a, IntLit) or any(v.name == a.x and v.kind == "dv" for v in env)
                    else self._fallback(t) for a, (t, _) in zip(args, self.ct.fields(cls))]
        return New(cls, tuple(args))

    def _affine_init(self, cls: str, depth: int, env: list[_V]) -> Expr:
        """A block initializer; closed half of the time so the capsule check
        both succeeds and fails across the corpus."""
        closed = self.rng.random() < 0.5
        scope = [] if closed else [v for v in env if v.kind != "affine"]
        return self._block(cls, max(depth, 1), scope, force=True)

    def _block(self, cls, depth, env, force=False):
        r = self.rng
        n = r.randrange(0, self.max_decls + 1)
        local = list(env)
        decls: list[Decl] = []
        # dvs first, so later dvs in the same block can form cycles
        n_dv = r.randrange(0, n + 1) if n else 0
        while True:
            decls, group = self._dv_group([r.choice(self.classes) for _ in range(n_dv)], local)
            if len(decls) <= self.max_decls:
                break
            n_dv -= 1
        local += group
        for _ in range(min(n - n_dv, self.max_decls - len(decls))):
            c = r.choice(self.classes + [INT])
            if c != INT and r.random() < 0.3:
                x = self.fresh(c)
                decls.append(Decl(DeclType(c, Qualifier.AFFINE), x,
                                  self._affine_init(c, depth - 1, local)))
                local.append(_V(x, c, "affine"))
            else:
                x = self.fresh(c)
                decls.append(Decl(DeclType(c), x, self.expr(c, depth - 1, local)))
                local.append(_V(x, c, "plain"))
        if r.random() < 0.5:
            decls = self._interleave(decls[:len(group)], decls[len(group):])
        body = self.expr(cls, depth - 1, local)
        if not decls and not force:
            return None
        if not decls:
            if cls == INT:
                x = self.fresh(INT)
                return Block((Decl(DeclType(INT), x, IntLit(r.randrange(10))),), Var(x))
            return self._closed_dv_block(cls)
        return Block(tuple(decls), body)

    def _interleave(self, dvs: list[Decl], rest: list[Decl]) -> list[Decl]:
        """Random merge keeping non-dvs in order; dvs may sit anywhere."""
        out = []
        dvs, rest = list(dvs), list(rest)
        while dvs or rest:
            if dvs and (not rest or self.rng.random() < 0.5):
                out.append(dvs.pop(0))
            else:
                out.append(rest.pop(0))
        return out


def gen_random_program(seed: int, ct: Optional[ClassTable] = None, max_depth: int = 5,
                       max_decls: int = 6, policy: str = "reach") -> Expr:
    ct = ct or fuzz_class_table()
    rng = random.Random(seed)
    while True:
        g = _Gen(rng, ct, max_decls)
        cls = rng.choice(sorted(ct.classes) + [INT])
        e = g._block(cls, max_depth, [], force=True)
        e = annotate(e, policy)
        if not free_vars(e) and not well_formed(e, ct, strict_affine=True):
            return e
