"""
Tests for higher-order pattern unification and splitting.

This module is part of the LF Totality Checker project.
"""

# test_unify.py
import itertools
import random

import pytest

from errors import UnificationUndecided
from lf_core import Context, Decl, Signature, Substitution, apply_subst
from terms import BVar, Lam, Root, TYPE, arrow, atom, const, free_vars, subst_fvars, var
from unify import (
    Mgu, NameSupply, NoSolution, UnifProblem, as_free_var, is_renaming, is_strict_term, match, split_on,
    strict_occurrence_exists, unify,
)

NAT = atom("nat")
SIG = Signature((
    Decl("nat", TYPE, True),
    Decl("z", NAT, False),
    Decl("s", arrow(NAT, NAT), False),
))


def _unify(lhs, rhs, ctx, freevars):
    return unify(UnifProblem(((lhs, rhs),), Context(tuple(ctx)), tuple(freevars), SIG), NameSupply())


def test_first_order_solution():
    out = _unify(const("s", var("X")), const("s", const("s", var("Y"))),
                 [("X", NAT), ("Y", NAT)], ["X"])
    assert isinstance(out, Mgu)
    assert out.subst.get("X") == const("s", var("Y"))


@pytest.mark.parametrize("lhs, rhs", [
    (const("z"), const("s", var("X"))),
    (var("X"), const("s", var("X"))),
    (const("s", var("Y")), const("z")),
])
def test_no_solution(lhs, rhs):
    out = _unify(lhs, rhs, [("X", NAT), ("Y", NAT)], ["X"])
    assert isinstance(out, NoSolution)


def test_rigid_variable_is_not_instantiated():
    out = _unify(var("Y"), const("z"), [("X", NAT), ("Y", NAT)], ["X"])
    assert isinstance(out, NoSolution)


def test_pattern_unification_under_binder():
    # [x] F x = [x] s x
    f_ty = arrow(NAT, NAT)
    lhs = Lam("x", Root(var("F").head, (Root(BVar(0)),)), NAT)
    rhs = Lam("x", const("s", Root(BVar(0))), NAT)
    out = _unify(lhs, rhs, [("F", f_ty)], ["F"])
    assert isinstance(out, Mgu)
    assert out.subst.get("F") == rhs


def test_match_only_instantiates_pattern_variables():
    sigma = match(atom("p", var("A"), const("z")), atom("p", const("s", const("z")), const("z")), ["A"])
    assert sigma is not None
    assert sigma.get("A") == const("s", const("z"))
    assert match(atom("p", const("z")), atom("p", var("B")), []) is None


def test_match_rejects_non_strict_patterns():
    f = Root(var("F").head, (const("z"),))
    with pytest.raises(UnificationUndecided):
        match(atom("p", f), atom("p", const("z")), ["F"])


def test_renaming_detection():
    assert is_renaming(Substitution((("A", var("B")), ("C", var("D")))))
    assert not is_renaming(Substitution((("A", var("B")), ("C", var("B")))))
    assert not is_renaming(Substitution((("A", const("z")),)))
    assert as_free_var(var("Q")) == "Q"


def test_split_on_constructors():
    ctx = Context((("N", NAT),))
    supply = NameSupply()
    zs = split_on(ctx, "N", SIG.lookup("z"), SIG, supply)
    ss = split_on(ctx, "N", SIG.lookup("s"), SIG, supply)
    assert isinstance(zs.outcome, Mgu) and zs.term == const("z")
    assert isinstance(ss.outcome, Mgu)
    assert ss.term.head.name == "s"
    assert len(ss.new_context) == 1


def test_name_supply_is_deterministic():
    a, b = NameSupply(), NameSupply()
    assert [a.fresh("N1") for _ in range(3)] == [b.fresh("N1") for _ in range(3)]
    assert NameSupply().fresh("D_12") == "D_1"
    assert NameSupply().fresh("_") == "X_1"


def test_strict_occurrences():
    f_of_z = Root(var("F").head, (const("z"),))
    f_of_bound = Lam("x", Root(var("F").head, (Root(BVar(0)),)), NAT)
    x_under_f = Root(var("F").head, (var("X"),))
    assert strict_occurrence_exists(const("s", var("X")), "X")
    assert strict_occurrence_exists(f_of_bound, "F")
    assert not strict_occurrence_exists(f_of_z, "F")
    assert not strict_occurrence_exists(x_under_f, "X")
    assert not strict_occurrence_exists(const("z"), "X")


def test_strict_terms():
    assert is_strict_term(atom("p", var("X"), const("s", var("Y"))), ["X", "Y"])
    assert not is_strict_term(atom("p", Root(var("F").head, (var("X"),))), ["X"])
    assert is_strict_term(const("z"), [])


XYZ = Context((("X", NAT), ("Y", NAT), ("Z", NAT)))


def _numeral(n):
    t = const("z")
    for _ in range(n):
        t = const("s", t)
    return t


def _nat_term(rng: random.Random, depth: int):
    pick = rng.randrange(3) if depth > 0 else rng.randrange(2)
    if pick == 0:
        return const("z")
    if pick == 1:
        return var(rng.choice(XYZ.names()))
    return const("s", _nat_term(rng, depth - 1))


GRID = [dict(zip(XYZ.names(), (_numeral(a), _numeral(b), _numeral(c))))
        for a, b, c in itertools.product(range(4), repeat=3)]


def test_mgu_factors_every_unifier():
    rng = random.Random(3)
    solvable = 0
    for _ in range(20000):
        if solvable == 500:
            break
        eqs = tuple((_nat_term(rng, 2), _nat_term(rng, 2)) for _ in range(2))
        unifiers = [th for th in GRID if all(subst_fvars(l, th) == subst_fvars(r, th) for l, r in eqs)]
        out = unify(UnifProblem(eqs, XYZ, tuple(XYZ.names()), SIG), NameSupply())
        if not unifiers:
            continue
        solvable += 1
        assert isinstance(out, Mgu), eqs
        sigma = out.subst
        for l, r in eqs:
            assert apply_subst(l, sigma) == apply_subst(r, sigma)
        # θ = σ;ρ，其中 ρ 是 θ 在 σ 定义域之外的部分
        for th in unifiers:
            rho = {v: m for v, m in th.items() if v not in sigma}
            for v in XYZ.names():
                assert subst_fvars(sigma.get(v, var(v)), rho) == th[v]
    assert solvable == 500


def test_match_recovers_the_instantiating_substitution():
    rng = random.Random(9)
    for _ in range(300):
        p = _nat_term(rng, 3)
        names = free_vars(p)
        sigma = {v: subst_fvars(_nat_term(rng, 2), {"X": var("A"), "Y": var("B"), "Z": const("z")})
                 for v in names}
        got = match(p, subst_fvars(p, sigma), names)
        assert got is not None
        assert {v: got.get(v) for v in names} == sigma


TM = atom("tm")
TM_SIG = Signature((
    Decl("tm", TYPE, True),
    Decl("app", arrow(TM, arrow(TM, TM)), False),
    Decl("abs", arrow(arrow(TM, TM), TM), False),
))


def _tm_body(rng: random.Random, depth: int, bound: int):
    leaves = [var("A")] + [Root(BVar(i)) for i in range(bound)]
    if depth <= 0 or rng.randrange(3) == 0:
        return rng.choice(leaves)
    if rng.randrange(2):
        return const("app", _tm_body(rng, depth - 1, bound), _tm_body(rng, depth - 1, bound))
    return const("abs", Lam("y", _tm_body(rng, depth - 1, bound + 1), TM))


def test_match_recovers_higher_order_pattern_instances():
    rng = random.Random(4)
    ctx = Context((("F", arrow(TM, TM)),))
    pattern = const("abs", Lam("x", var("F", Root(BVar(0))), TM))
    for _ in range(100):
        value = Lam("x", _tm_body(rng, 3, 1), TM)
        target = subst_fvars(pattern, {"F": value})
        got = match(pattern, target, ctx)
        assert got is not None and got.get("F") == value
