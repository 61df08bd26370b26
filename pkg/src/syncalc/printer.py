"""Concrete-syntax rendering of terms, configurations, programs and traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .terms import (Block, ClassTable, Decl, Expr, FieldAccess, FieldAssign, IntLit,
                    Invoke, New, Oid, Var)


def render_oid(serial: int) -> str:
    return f"#{serial}"


def render(e: Expr, annot: bool = False) -> str:
    """Render a term; ``annot`` also prints block annotations as ``^[x, y]``."""
    match e:
        case Var(x):
            return str(x)
        case Oid(n):
            return render_oid(n)
        case IntLit(n):
            return str(n)
        case FieldAccess(r, f):
            return f"{_recv(r, annot)}.{f}"
        case FieldAssign(r, f, rhs):
            return f"{_recv(r, annot)}.{f} = {render(rhs, annot)}"
        case New(c, args):
            return f"new {c}({', '.join(render(a, annot) for a in args)})"
        case Invoke(r, m, args):
            return f"{_recv(r, annot)}.{m}({', '.join(render(a, annot) for a in args)})"
        case Block(decls, body, ann):
            parts = [render_decl(d, annot) for d in decls]
            parts.append(render(body, annot))
            text = "{" + "; ".join(parts) + "}"
            if annot and ann is not None:
                text += "^[" + ", ".join(str(x) for x in sorted(ann)) + "]"
            return text
    raise TypeError(e)


def _recv(r: Expr, annot: bool) -> str:
    # assignments bind looser than member suffixes
    text = render(r, annot)
    return f"({text})" if isinstance(r, FieldAssign) else text


def render_decl(d: Decl, annot: bool = False) -> str:
    return f"{d.dtype} {d.var} = {render(d.init, annot)}"


def render_config(expr: Expr, mem) -> str:
    cells = ", ".join(f"{render_oid(k)}↦{st.cls}({', '.join(render(a) for a in st.slots)})"
                      for k, st in sorted(mem.objects.items()))
    return f"⟨{render(expr)} | {cells}⟩"


def render_class_table(ct: ClassTable, annot: bool = False) -> str:
    lines = []
    for c in ct.classes.values():
        members = [f"{t} {f};" for t, f in c.fields]
        for sig in c.methods.values():
            params = ", ".join(f"{p.dtype} {p.var}" for p in sig.params)
            members.append(f"{sig.ret} {sig.name}({params}) {{ {render(sig.body, annot)} }}")
        lines.append(f"class {c.name} {{ " + " ".join(members) + " }")
    return "\n".join(lines)


def render_program(ct: ClassTable, main: Expr, annot: bool = False) -> str:
    head = render_class_table(ct, annot)
    return (head + "\n" if head else "") + render(main, annot) + "\n"


@dataclass(frozen=True)
class TraceRecord:
    index: int
    rule: str
    text: str
    rho: Optional[str] = None


def render_rho(rho) -> str:
    return "{" + ", ".join(f"{render_oid(n)}↦{x}" for n, x in sorted(rho.items())) + "}"


def render_trace(records) -> str:
    """One line per record: index, rule, rendering (and rho when present)."""
    lines = ["step  rule              term"]
    for r in records:
        line = f"{r.index:>4}  {r.rule:<16}  {r.text}"
        if r.rho is not None:
            line += "    ρ=" + r.rho
        lines.append(line)
    return "\n".join(lines) + "\n"
