"""
Tests for the LF kernel.

This module is part of the LF Totality Checker project.
"""

# test_lf_core.py
import random

import pytest

from errors import IllTyped
from lf_core import (
    Context, Decl, Signature, Substitution, apply_subst, check_context, check_family, check_kind,
    check_object, check_signature, check_subst_typing, compose_subst, equal, normalize,
)
from terms import (
    BVar, Const, FVar, Lam, Pi, RApp, RIdent, RLam, Root, TYPE, arrow, atom, const, instantiate, open_var, show, var,
)

NAT = atom("nat")

NAT_SIG = Signature((
    Decl("nat", TYPE, True),
    Decl("z", NAT, False),
    Decl("s", arrow(NAT, NAT), False),
    Decl("plus", arrow(NAT, arrow(NAT, arrow(NAT, TYPE))), True),
))


def test_signature_checks():
    check_signature(NAT_SIG)


def test_fixture_signatures_check(subred_src, plus_src):
    check_signature(subred_src.signature)
    check_signature(plus_src.signature)


def test_duplicate_declaration_rejected():
    sig = NAT_SIG.extend(Decl("z", NAT, False))
    with pytest.raises(IllTyped):
        check_signature(sig)


def test_object_typing():
    check_object(Context(), NAT_SIG, const("s", const("z")), NAT)
    with pytest.raises(IllTyped):
        check_object(Context(), NAT_SIG, const("s", const("s")), NAT)


def test_unknown_variable_is_ill_typed():
    with pytest.raises(IllTyped):
        check_object(Context(), NAT_SIG, var("X"), NAT)
    check_object(Context((("X", NAT),)), NAT_SIG, var("X"), NAT)


def test_normalize_beta_redex():
    # ([x:nat] s x) z
    raw = RApp(RLam("x", RIdent("nat"), RApp(RIdent("s"), RIdent("x"))), RIdent("z"))
    assert normalize(raw, Context(), NAT_SIG) == const("s", const("z"))


def test_eta_long_equality():
    ctx = Context((("F", arrow(NAT, NAT)),))
    eta = Lam("x", Root(var("F").head, (Root(BVar(0)),)), NAT)
    assert equal(var("F"), eta, ctx, NAT_SIG)


def test_subst_typing_identity_padding():
    ctx2 = Context((("A", NAT), ("B", NAT)))
    ctx = Context((("B", NAT),))
    check_subst_typing(ctx, NAT_SIG, Substitution((("A", const("z")),)), ctx2)
    with pytest.raises(IllTyped):
        check_subst_typing(Context(), NAT_SIG, Substitution((("A", const("z")),)), ctx2)


def test_family_and_kind_checks():
    plus = atom("plus", const("z"), const("z"), const("z"))
    check_family(Context(), NAT_SIG, plus, TYPE)
    with pytest.raises(IllTyped):
        check_family(Context(), NAT_SIG, atom("plus", const("z")), TYPE)
    check_kind(Context(), NAT_SIG, arrow(NAT, TYPE))
    with pytest.raises(IllTyped):
        check_kind(Context(), NAT_SIG, arrow(atom("plus"), TYPE))


def test_context_checks():
    check_context(NAT_SIG, Context((("N", NAT), ("P", atom("plus", var("N"), const("z"), var("N"))))))
    with pytest.raises(IllTyped):
        check_context(NAT_SIG, Context((("N", NAT), ("N", NAT))))
    with pytest.raises(IllTyped):
        check_context(NAT_SIG, Context((("P", atom("plus", var("N"), const("z"), var("N"))),)))


XYZ = Context((("X", NAT), ("Y", NAT), ("Z", NAT)))


def _nat_term(rng: random.Random, depth: int):
    pick = rng.randrange(3) if depth > 0 else rng.randrange(2)
    if pick == 0:
        return const("z")
    if pick == 1:
        return var(rng.choice(XYZ.names()))
    return const("s", _nat_term(rng, depth - 1))


def _nat_subst(rng: random.Random) -> Substitution:
    return Substitution(tuple((n, _nat_term(rng, 3)) for n in XYZ.names()), XYZ)


@pytest.mark.parametrize("seed", range(50))
def test_substitution_composition_laws(seed):
    rng = random.Random(seed)
    t = _nat_term(rng, 3)
    s1, s2, s3 = _nat_subst(rng), _nat_subst(rng), _nat_subst(rng)
    s12 = compose_subst(s1, s2, XYZ)
    assert apply_subst(t, s12) == apply_subst(apply_subst(t, s1), s2)
    left = compose_subst(s12, s3, XYZ)
    right = compose_subst(s1, compose_subst(s2, s3, XYZ), XYZ)
    assert left == right
    check_subst_typing(XYZ, NAT_SIG, s12, XYZ)


def test_composition_pads_with_identity():
    s = compose_subst(Substitution((("X", const("z")),)), Substitution((("Y", const("s", const("z"))),)), XYZ)
    assert s.names() == ["X", "Y", "Z"]
    assert s.get("X") == const("z")
    assert s.get("Y") == const("s", const("z"))
    assert s.get("Z") == var("Z")


TM = atom("tm")

TM_SIG = Signature((
    Decl("tm", TYPE, True),
    Decl("app", arrow(TM, arrow(TM, TM)), False),
    Decl("abs", arrow(arrow(TM, TM), TM), False),
))

XYF = Context((("X", TM), ("Y", TM), ("F", arrow(TM, TM))))


def _tm_term(rng: random.Random, depth: int, bound: int = 0):
    leaves = [var("X"), var("Y")] + [Root(BVar(i)) for i in range(bound)]
    if depth <= 0:
        return rng.choice(leaves)
    pick = rng.randrange(5)
    if pick == 0:
        return rng.choice(leaves)
    if pick == 1:
        return var("F", _tm_term(rng, depth - 1, bound))
    if pick == 2:
        return const("app", _tm_term(rng, depth - 1, bound), _tm_term(rng, depth - 1, bound))
    return const("abs", Lam("x", _tm_term(rng, depth - 1, bound + 1), TM))


def _tm_subst(rng: random.Random) -> Substitution:
    return Substitution((
        ("X", _tm_term(rng, 2)),
        ("Y", _tm_term(rng, 2)),
        ("F", Lam("x", _tm_term(rng, 2, 1), TM)),
    ), XYF)


def test_substitution_composition_laws_thousand_triples():
    rng = random.Random(2024)
    for _ in range(1000):
        t = _nat_term(rng, 3)
        s1, s2, s3 = _nat_subst(rng), _nat_subst(rng), _nat_subst(rng)
        s12 = compose_subst(s1, s2, XYZ)
        assert apply_subst(t, s12) == apply_subst(apply_subst(t, s1), s2)
        assert compose_subst(s12, s3, XYZ) == compose_subst(s1, compose_subst(s2, s3, XYZ), XYZ)


def test_higher_order_composition_laws():
    rng = random.Random(11)
    for _ in range(1000):
        t = _tm_term(rng, 3)
        s1, s2, s3 = _tm_subst(rng), _tm_subst(rng), _tm_subst(rng)
        s12 = compose_subst(s1, s2, XYF)
        # F 的值是 λ，代换后需要层级归约
        assert apply_subst(t, s12) == apply_subst(apply_subst(t, s1), s2)
        assert compose_subst(s12, s3, XYF) == compose_subst(s1, compose_subst(s2, s3, XYF), XYF)
        check_object(XYF, TM_SIG, apply_subst(t, s12), TM)
    check_subst_typing(XYF, TM_SIG, s12, XYF)


def _naive_check(ctx: dict, sig: Signature, m, a) -> bool:
    """直接按定型规则递归，不做 η 展开也不返回规范形式。"""
    if isinstance(m, Lam):
        if not isinstance(a, Pi):
            return False
        x = f"naive{len(ctx)}"
        return _naive_check({**ctx, x: a.domain}, sig, open_var(m.body, x), open_var(a.body, x))
    if not isinstance(m, Root):
        return False
    if isinstance(m.head, FVar):
        ty = ctx.get(m.head.name)
    elif isinstance(m.head, Const):
        d = sig.lookup(m.head.name)
        ty = None if d is None or d.is_family else d.classifier
    else:
        ty = None
    if ty is None:
        return False
    for arg in m.spine:
        if not isinstance(ty, Pi) or not _naive_check(ctx, sig, arg, ty.domain):
            return False
        ty = instantiate(ty.body, arg)
    return ty == a


def _plus_corpus():
    z = const("z")
    one = const("s", z)
    nat = NAT
    return [
        (z, nat),
        (one, nat),
        (const("s"), nat),
        (const("s", const("s")), nat),
        (const("z", z), nat),
        (const("nat"), nat),
        (var("X"), nat),
        (var("W"), nat),
        (var("X"), atom("plus", z, z, z)),
        (const("plus-z", z), atom("plus", z, z, z)),
        (const("plus-z", z), atom("plus", z, z, one)),
        (const("plus-s", z, z, z, const("plus-z", z)), atom("plus", one, z, one)),
        (const("plus-s", z, z, z, const("plus-z", z)), atom("plus", one, z, z)),
        (const("plus-s", z, one, one, const("plus-z", one)), atom("plus", one, z, one)),
        (Lam("x", const("s", Root(BVar(0))), nat), arrow(nat, nat)),
        (Lam("x", const("s", Root(BVar(0))), nat), nat),
        (Lam("x", Lam("y", Root(BVar(1)), nat), nat), arrow(nat, arrow(nat, nat))),
    ]


def _random_candidate(rng: random.Random, depth: int):
    head = rng.choice(["z", "s", "plus-z", "plus-s", "nat", "X", "W"])
    spine = tuple(_random_candidate(rng, depth - 1) for _ in range(rng.randrange(3) if depth > 0 else 0))
    return Root(FVar(head) if head in ("X", "W") else Const(head), spine)


def test_checker_agrees_with_naive_rules(plus_src):
    sig = plus_src.signature
    ctx = Context((("X", NAT),))
    rng = random.Random(5)
    cases = _plus_corpus()
    for _ in range(500):
        target = rng.choice([NAT, atom("plus", _nat_term(rng, 1), _nat_term(rng, 1), _nat_term(rng, 1))])
        cases.append((_random_candidate(rng, 3), target))
    seen = set()
    for m, a in cases:
        try:
            check_object(ctx, sig, m, a)
            ok = True
        except IllTyped:
            ok = False
        assert ok == _naive_check(dict(ctx.entries), sig, m, a), (show(m), show(a))
        seen.add(ok)
    # 两个方向都要出现
    assert seen == {True, False}


def test_checker_agrees_with_naive_rules_under_binders(subred_src):
    sig = subred_src.signature
    base = const("base")
    ident = Lam("x", Root(BVar(0)), TM)
    deriv = Lam("x", Lam("d", Root(BVar(0)), atom("of", Root(BVar(0)), base)), TM)
    m = const("of-abs", ident, base, base, deriv)
    good = atom("of", const("abs", ident), const("arr", base, base))
    bad = atom("of", const("abs", ident), const("arr", base, const("arr", base, base)))
    for a, expected in ((good, True), (bad, False)):
        try:
            check_object(Context(), sig, m, a)
            ok = True
        except IllTyped:
            ok = False
        assert ok == expected == _naive_check({}, sig, m, a)
