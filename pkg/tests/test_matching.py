from conftest import load
from syncalc.conventional import Config, Memory, ObjState
from syncalc.generator import fuzz_class_table, gen_random_program
from syncalc.matching import erase, match_check, match_infer, simulate_run
from syncalc.parser import parse_expr
from syncalc.syntactic import Session
from syncalc.terms import Ident, IntLit, Oid


def P(s):
    return parse_expr(s, None)


def test_erase_allocates_every_dv():
    cfg, rho = erase(P("{D x = new D(x); D y = new D(x); y.f = x}"))
    assert sorted(rho.items()) == [(1, Ident("x")), (2, Ident("y"))]
    assert cfg.mem.objects[2] == ObjState("D", (Oid(1),))
    assert match_check(P("{D x = new D(x); D y = new D(x); y.f = x}"), cfg, rho)


def test_erase_rejects_dv_over_unevaluated_name():
    import pytest
    with pytest.raises(ValueError):
        erase(P("{C u = o.f; D x = new D(u); x}"))


def test_match_check_fails_on_wrong_slot():
    e = P("{C x = new C(1); x.f}")
    cfg, rho = erase(e)
    cfg.mem.objects[1] = ObjState("C", (IntLit(2),))
    assert not match_check(e, cfg, rho)


def test_match_infer_extends_rho():
    e = P("{C x = new C(1); C y = new C(x); y}")
    m = Memory()
    m.alloc(ObjState("C", (IntLit(1),)))
    m.alloc(ObjState("C", (Oid(1),)))
    rho = match_infer(e, Config(Oid(2), m), {})
    assert rho == {1: Ident("x"), 2: Ident("y")}


def test_affine_program_simulates():
    p = load("affine.sc")
    rep = simulate_run(p.main, p.ct)
    assert rep.verdict == "ok"
    assert [r.rule for r in rep.records] == ["new", "affine-elim", "move-subterm",
                                             "field-access", "garbage"]
    assert rep.cfg.expr == IntLit(0)


def test_ex2_conventional_side_continues():
    p = load("ex2.sc")
    rep = simulate_run(p.main, p.ct)
    assert rep.verdict == "capsule-stuck"
    assert rep.notes == ["conventional side continues"]


def test_duplication_breaks_matching():
    p = load("duplicate.sc", strict_affine=False)
    rep = simulate_run(p.main, p.ct)
    assert rep.verdict == "violation"
    assert rep.violations[0].rule == "affine-elim"


def test_block_value_result_is_an_object():
    p = load("ex1.sc")
    rep = simulate_run(p.main, p.ct)
    assert rep.verdict == "ok"
    assert isinstance(rep.cfg.expr, Oid)
    assert rep.rho[rep.cfg.expr.serial] == Ident("z")


def test_rho_and_domain_grow_monotonically():
    ct = fuzz_class_table()
    for seed in range(40):
        e = gen_random_program(seed, ct, 4, 5)
        rep = simulate_run(e, ct)
        assert rep.ok, rep.violations
        rho, dom = dict(rep.initial_rho), rep.initial_cfg.mem.dom()
        for rec in rep.records:
            assert not set(rec.rho_delta) & set(rho)
            rho.update(rec.rho_delta)
            assert dom <= rec.cfg.mem.dom()
            dom = rec.cfg.mem.dom()
