import pytest
from hypothesis import given, settings, strategies as st

from conftest import PROGRAMS
from syncalc.congruence import alpha_eq
from syncalc.generator import fuzz_class_table, gen_random_program
from syncalc.parser import ParseError, parse_expr, parse_program
from syncalc.printer import render, render_config, render_program, render_trace
from syncalc.terms import Block, Ident, IntLit, Var


def test_ex1_shape():
    p = parse_program((PROGRAMS / "ex1.sc").read_text())
    assert p.diagnostics == []
    assert isinstance(p.main, Block)
    assert [str(d.var) for d in p.main.decls] == ["x", "y", "w"]
    assert p.main.decls[2].dtype.affine


def test_affine_declaration_parses():
    e = parse_expr("{ a C x = new C(0); x.f }")
    assert e.decls[0].dtype.affine and e.decls[0].dtype.cls == "C"


def test_chained_assignment_rejected():
    with pytest.raises(ParseError):
        parse_expr("x.f = y = z")


def test_assignment_needs_field_target():
    with pytest.raises(ParseError):
        parse_expr("x = y")


def test_error_position_reported():
    with pytest.raises(ParseError) as exc:
        parse_program("class C { int f; }\n{ C x = ; x }")
    assert exc.value.line == 2


def test_sequencing_desugars_to_unused_declaration():
    p = parse_program("class C { int f; } { C x = new C(0); x.f = 3; x.f }")
    b = p.main
    assert len(b.decls) == 2
    assert b.decls[1].dtype.cls == "int"
    assert b.decls[1].var not in {Ident("x")}


def test_explicit_annotation_kept():
    e = parse_expr("{D z = new D(z); z}^[z]")
    assert e.annot == frozenset({Ident("z")})


def test_bare_atoms():
    assert parse_expr("x") == Var(Ident("x"))
    assert parse_expr("-4") == IntLit(-4)


@pytest.mark.parametrize("name", sorted(p.name for p in PROGRAMS.glob("*.sc")))
def test_program_round_trip(name):
    p = parse_program((PROGRAMS / name).read_text(), strict_affine=False)
    text = render_program(p.ct, p.main, annot=True)
    q = parse_program(text, strict_affine=False)
    assert q.main == p.main
    assert q.ct == p.ct
    assert render_program(q.ct, q.main, annot=True) == text


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_generated_round_trip(seed):
    ct = fuzz_class_table()
    e = gen_random_program(seed, ct, 4, 4)
    again = parse_expr(render(e, annot=True), None)
    assert again == e
    assert alpha_eq(again, e)


def test_render_config_and_empty_trace():
    from syncalc.conventional import Memory, ObjState
    m = Memory()
    m.alloc(ObjState("C", (IntLit(0),)))
    assert render_config(IntLit(0), m) == "⟨0 | #1↦C(0)⟩"
    assert render_trace([]) == "step  rule              term\n"
