"""Correspondence between syntactic terms and conventional configurations,
and a harness that co-runs both reducers.

A match is labelled by ``rho``, an injective map from object serials to the
variables of evaluated declarations.  Evaluated declarations are checked
against memory wherever they occur and are absent on the conventional side.
Bound variables of other declarations are related by a bijection, so the
two sides do not need to agree on local names.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .conventional import CDone, Config, CStep, Memory, ObjState, collapse, cstep
from .terms import (Block, Decl, Expr, FieldAccess, FieldAssign, Ident, IntLit, Invoke, New,
                    Oid, Var, classify_value, BlockValue, VarValue, IntValue, is_dv,
                    split_dvs, subterms)
from .syntactic import (CapsuleCheckFailed, Done, FuelExhausted, Session, Step, Stuck, step)

RhoMap = dict[int, Ident]


def all_dvs(e: Expr) -> dict[Ident, Decl]:
    out: dict[Ident, Decl] = {}
    for t in subterms(e):
        if isinstance(t, Block):
            for d in t.decls:
                if is_dv(d):
                    out[d.var] = d
    return out


# ---------------------------------------------------------------------------
# Erasure


def erase(e: Expr) -> tuple[Config, RhoMap]:
    """Move every evaluated declaration of ``e`` into a fresh memory."""
    dvs = all_dvs(e)
    ids = {x: k + 1 for k, x in enumerate(dvs)}
    mem = Memory()
    for x, d in dvs.items():
        slots = []
        for a in d.init.args:
            if isinstance(a, Var):
                if a.x not in ids:
                    raise ValueError(f"evaluated declaration of {x} refers to {a.x}, "
                                     "which is not evaluated")
                slots.append(Oid(ids[a.x]))
            else:
                slots.append(a)
        mem.objects[ids[x]] = ObjState(d.init.cls, tuple(slots))
    mem.next_serial = len(ids) + 1
    return Config(_erase(e, ids), mem), {n: x for x, n in ids.items()}


def _erase(e: Expr, ids: dict[Ident, int]) -> Expr:
    def go(t):
        return _erase(t, ids)

    match e:
        case Var(x):
            return Oid(ids[x]) if x in ids else e
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
        case Block(decls, body, _):
            rest = tuple(Decl(d.dtype, d.var, go(d.init)) for d in decls if not is_dv(d))
            b = go(body)
            return Block(rest, b, frozenset()) if rest else b
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Matching


class _Matcher:
    def __init__(self, mem: Memory, rho: RhoMap, dvs: dict[Ident, Decl], infer: bool):
        self.mem = mem
        self.rho = dict(rho)
        self.inv = {x: n for n, x in rho.items()}
        self.dvs = dvs
        self.infer = infer

    def bind(self, n: int, x: Ident) -> bool:
        if n in self.rho or x in self.inv:
            return self.rho.get(n) == x
        if not self.infer or x not in self.dvs or n not in self.mem.objects:
            return False
        self.rho[n] = x
        self.inv[x] = n
        return True

    def dv_ok(self, d: Decl) -> bool:
        n = self.inv.get(d.var)
        st = self.mem.objects.get(n) if n is not None else None
        if st is None or st.cls != d.init.cls or len(st.slots) != len(d.init.args):
            return False
        for a, s in zip(d.init.args, st.slots):
            if isinstance(a, IntLit):
                if a != s:
                    return False
            elif not (isinstance(s, Oid) and self.inv.get(a.x) == s.serial):
                return False
        return True

    def term(self, e: Expr, c: Expr, sigma: dict, img: frozenset) -> bool:
        c = collapse(c)
        match e:
            case Var(x):
                if x in sigma:
                    return c == Var(sigma[x])
                if isinstance(c, Oid):
                    return self.bind(c.serial, x)
                return (isinstance(c, Var) and c.x == x and x not in self.inv
                        and x not in self.dvs and x not in img)
            case IntLit():
                return c == e
            case Oid():
                return False
            case FieldAccess(r, f):
                return (isinstance(c, FieldAccess) and c.field == f
                        and self.term(r, c.recv, sigma, img))
            case FieldAssign(r, f, rhs):
                return (isinstance(c, FieldAssign) and c.field == f
                        and self.term(r, c.recv, sigma, img)
                        and self.term(rhs, c.rhs, sigma, img))
            case New(cls, args):
                return (isinstance(c, New) and c.cls == cls and len(c.args) == len(args)
                        and all(self.term(a, b, sigma, img) for a, b in zip(args, c.args)))
            case Invoke(r, m, args):
                return (isinstance(c, Invoke) and c.method == m and len(c.args) == len(args)
                        and self.term(r, c.recv, sigma, img)
                        and all(self.term(a, b, sigma, img) for a, b in zip(args, c.args)))
            case Block(decls, body, _):
                dvs, rest = split_dvs(decls)
                if not self.infer and not all(self.dv_ok(d) for d in dvs):
                    return False
                if not rest:
                    return self.term(body, c, sigma, img)
                if not isinstance(c, Block) or len(c.decls) != len(rest):
                    return False
                sigma2 = dict(sigma)
                img2 = set(img)
                for d, cd in zip(rest, c.decls):
                    if d.dtype.cls != cd.dtype.cls or d.var in self.inv or cd.var in img2:
                        return False
                    sigma2[d.var] = cd.var
                    img2.add(cd.var)
                img2 = frozenset(img2)
                return (all(self.term(d.init, cd.init, sigma2, img2)
                            for d, cd in zip(rest, c.decls))
                        and self.term(body, c.body, sigma2, img2))
        return False

    def propagate(self) -> bool:
        changed = True
        while changed:
            changed = False
            for x, d in self.dvs.items():
                n = self.inv.get(x)
                if n is None:
                    continue
                st = self.mem.objects.get(n)
                if st is None or st.cls != d.init.cls or len(st.slots) != len(d.init.args):
                    return False
                for a, s in zip(d.init.args, st.slots):
                    if isinstance(a, Var) and isinstance(s, Oid) and a.x not in self.inv \
                            and s.serial not in self.rho:
                        if not self.bind(s.serial, a.x):
                            return False
                        changed = True
        return True


def match_check(e: Expr, cfg: Config, rho: RhoMap) -> bool:
    if len(set(rho.values())) != len(rho):
        return False
    m = _Matcher(cfg.mem, rho, all_dvs(e), infer=False)
    return m.term(e, cfg.expr, {}, frozenset())


def match_infer(e: Expr, cfg: Config, base: RhoMap, budget: int = 200) -> Optional[RhoMap]:
    """Smallest extension of ``base`` under which ``e`` matches ``cfg``, or None."""
    if len(set(base.values())) != len(base):
        return None
    dvs = all_dvs(e)
    m = _Matcher(cfg.mem, base, dvs, infer=True)
    if not m.term(e, cfg.expr, {}, frozenset()) or not m.propagate():
        return None
    open_vars = [x for x in dvs if x not in m.inv]
    for rho in _complete(m, open_vars, [budget]):
        if match_check(e, cfg, rho):
            return rho
    return None


def _complete(m: _Matcher, open_vars: list[Ident], budget: list[int]):
    """Assignments for evaluated declarations the walk did not reach."""
    open_vars = [x for x in open_vars if x not in m.inv]
    if not open_vars:
        yield dict(m.rho)
        return
    x = open_vars[0]
    d = m.dvs[x]
    for n, st in sorted(m.mem.objects.items()):
        if budget[0] <= 0:
            return
        if n in m.rho or st.cls != d.init.cls:
            continue
        budget[0] -= 1
        m2 = _Matcher(m.mem, m.rho, m.dvs, infer=True)
        if m2.bind(n, x) and m2.propagate():
            yield from _complete(m2, open_vars[1:], budget)


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class SimRecord:
    index: int
    rule: str
    term: Expr
    conv_steps: int
    conv_rules: list[str]
    rho_delta: dict[int, Ident]
    cfg: Config


@dataclass
class Violation:
    index: int
    rule: str
    detail: str
    transcript: list[str] = field(default_factory=list)


@dataclass
class SimReport:
    records: list[SimRecord]
    initial: Expr
    initial_cfg: Config
    initial_rho: RhoMap
    outcome: Union[Done, Stuck, FuelExhausted, None]
    violations: list[Violation]
    rho: RhoMap
    cfg: Config
    verdict: str
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def simulate_step(e2: Expr, cfg: Config, rho: RhoMap, ct, k: int = 8,
                  index: int = 0, rule: str = "") -> Union[tuple[Config, RhoMap, int, list[str]],
                                                           Violation]:
    """Find the first j <= k such that ``e2`` matches the j-th conventional
    successor of ``cfg`` under an extension of ``rho``."""
    from .printer import render_config
    cur = cfg
    rules: list[str] = []
    transcript = []
    for j in range(k + 1):
        rho2 = match_infer(e2, cur, rho)
        transcript.append(f"j={j} {render_config(cur.expr, cur.mem)} "
                          f"{'match' if rho2 is not None else 'no match'}")
        if rho2 is not None:
            if any(rho2.get(n) != x for n, x in rho.items()):
                return Violation(index, rule, "rho shrank", transcript)
            if len(set(rho2.values())) != len(rho2):
                return Violation(index, rule, "rho not injective", transcript)
            if not cfg.mem.dom() <= cur.mem.dom():
                return Violation(index, rule, "memory domain shrank", transcript)
            return cur, rho2, j, rules
        out = cstep(cur, ct)
        if not isinstance(out, CStep):
            break
        rules.append(out.rule)
        cur = out.cfg
    return Violation(index, rule, f"no match within {k} conventional steps", transcript)


def simulate_run(e: Expr, ct, fuel: int = 500, k: int = 8, policy: str = "reach",
                 session: Optional[Session] = None) -> SimReport:
    session = session or Session(ct, policy=policy)
    cur = start = session.prepare(e)
    try:
        cfg, rho = erase(cur)
    except ValueError as exc:
        return SimReport([], cur, Config(cur), {}, None,
                         [Violation(0, "erase", str(exc))], {}, Config(cur), "violation")
    start_cfg, start_rho = cfg, dict(rho)
    violations: list[Violation] = []
    notes: list[str] = []
    if not match_check(cur, cfg, rho):
        violations.append(Violation(0, "erase", "erased term does not match"))
    records: list[SimRecord] = []
    outcome = None
    for i in range(fuel + 1):
        out = step(cur, session)
        if not isinstance(out, Step):
            outcome = out
            break
        if i == fuel:
            outcome = FuelExhausted(fuel)
            break
        res = simulate_step(out.term, cfg, rho, ct, k, i, out.rule)
        if isinstance(res, Violation):
            violations.append(res)
            records.append(SimRecord(i, out.rule, out.term, -1, [], {}, cfg))
            outcome = None
            break
        cfg2, rho2, j, crules = res
        delta = {n: x for n, x in rho2.items() if n not in rho}
        records.append(SimRecord(i, out.rule, out.term, j, crules, delta, cfg2))
        cur, cfg, rho = out.term, cfg2, rho2

    verdict = "violation" if violations else "ok"
    if isinstance(outcome, Done):
        problem = _final_value_check(outcome.value, cfg, rho)
        if problem:
            violations.append(Violation(len(records), "final", problem))
            verdict = "violation"
    elif isinstance(outcome, Stuck):
        if isinstance(outcome.reason, CapsuleCheckFailed):
            verdict = "capsule-stuck" if not violations else verdict
            nxt = cstep(cfg, ct)
            notes.append("conventional side " + ("continues" if isinstance(nxt, CStep)
                                                 else "also halts"))
        elif not violations:
            verdict = "stuck"
    elif isinstance(outcome, FuelExhausted) and not violations:
        verdict = "fuel"
    return SimReport(records, start, start_cfg, start_rho, outcome, violations, rho, cfg,
                     verdict, notes)


def _final_value_check(v: Expr, cfg: Config, rho: RhoMap) -> Optional[str]:
    """A matched value corresponds to a conventional value of the same kind."""
    c = collapse(cfg.expr)
    cv = classify_value(v)
    if isinstance(cv, BlockValue):
        if not isinstance(c, Oid) or rho.get(c.serial) != cv.x:
            return f"block value with result {cv.x} does not correspond to an object"
    elif isinstance(cv, VarValue):
        if not (c == Var(cv.x) or (isinstance(c, Oid) and rho.get(c.serial) == cv.x)):
            return f"variable {cv.x} does not correspond"
    elif isinstance(cv, IntValue):
        if c != IntLit(cv.n):
            return f"integer {cv.n} does not correspond"
    return None
