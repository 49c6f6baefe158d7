"""
Tests for the M2 proof checker and executor.

This module is part of the LF Totality Checker project.
"""

# test_m2_logic.py
import dataclasses
import random

import pytest

from errors import BudgetExhausted, CaseMguMismatch, CaseNotExhaustive, NoCaseMatches, ProofCheckError, ScopeError
from lf_core import Context, Substitution, check_object
from lp_engine import Goal, solve
from m2_logic import (
    AllIntro, Case, CaseBranch, Formula, Pattern, Sequent, Witness,
    check_proof, execute, family_to_formula, subst_formula,
)
from proofgen import generate
from terms import BVar, Lam, Root, atom, const, free_vars, subst_fvars, var
from twelf_parser import parse_goal
from unify import NameSupply

NAT = atom("nat")


def nat(n):
    t = const("z")
    for _ in range(n):
        t = const("s", t)
    return t


def _seq(formula, proof):
    return Sequent(Context(), (), formula, proof)


def test_family_formula(plus_src):
    f = family_to_formula(plus_src.modes["plus"])
    assert f.forall.names() == ["N1", "N2"]
    assert f.exists.names() == ["N3", "D"]
    assert f.exists.lookup("D") == atom("plus", var("N1"), var("N2"), var("N3"))


def test_identity_witness(plus_src):
    f = Formula(Context((("N", NAT),)), Context((("M", NAT),)))
    p = AllIntro(Context((("K", NAT),)), Witness(Substitution((("M", var("K")),))))
    check_proof(_seq(f, p), plus_src.signature)


def test_ill_typed_witness(plus_src):
    f = Formula(Context((("N", NAT),)), Context((("M", NAT),)))
    p = AllIntro(Context((("K", NAT),)), Witness(Substitution((("M", const("s")),))))
    with pytest.raises(ProofCheckError):
        check_proof(_seq(f, p), plus_src.signature)


def test_witness_must_cover_existentials(plus_src):
    f = Formula(Context((("N", NAT),)), Context((("M", NAT),)))
    p = AllIntro(Context((("K", NAT),)), Witness(Substitution()))
    with pytest.raises(ScopeError):
        check_proof(_seq(f, p), plus_src.signature)


def _nat_case(branches):
    f = Formula(Context((("N", NAT),)), Context((("M", NAT),)))
    return f, AllIntro(Context((("N", NAT),)), Case("N", tuple(branches)))


Z_BRANCH = CaseBranch(Pattern(Context(), Context(), const("z")),
                      Witness(Substitution((("M", const("z")),))))
S_BRANCH = CaseBranch(Pattern(Context((("P", NAT),)), Context(), const("s", var("P"))),
                      Witness(Substitution((("M", var("P")),))))


def test_case_on_nat(plus_src):
    f, p = _nat_case([Z_BRANCH, S_BRANCH])
    check_proof(_seq(f, p), plus_src.signature)
    out = execute(p, Substitution((("N", nat(3)),)), plus_src.signature, formula=f)
    assert out.get("M") == nat(2)


def test_case_missing_branch(plus_src):
    f, p = _nat_case([Z_BRANCH])
    with pytest.raises(CaseNotExhaustive):
        check_proof(_seq(f, p), plus_src.signature)


def test_case_branch_for_impossible_constant(plus_src):
    bogus = CaseBranch(Pattern(Context(), Context(), const("plus-z", const("z"))),
                       Witness(Substitution((("M", const("z")),))))
    f, p = _nat_case([Z_BRANCH, S_BRANCH, bogus])
    with pytest.raises(CaseMguMismatch):
        check_proof(_seq(f, p), plus_src.signature)


def test_deleting_a_generated_case_is_rejected(subred_src, subred_report):
    proof = generate(subred_report, subred_src.signature)
    case = proof.body.body
    cut = dataclasses.replace(case, branches=case.branches[1:])
    broken = dataclasses.replace(proof, body=dataclasses.replace(proof.body, body=cut))
    with pytest.raises(CaseNotExhaustive):
        check_proof(_seq(proof.formula, broken), subred_src.signature, subred_report.order)


def test_subst_formula_renames_capturing_binder():
    f = Formula(Context(), Context((("M", NAT), ("D", atom("plus", var("N"), var("M"), var("M"))))))
    g = subst_formula(f, {"N": var("M")}, NameSupply(50))
    assert g.exists.names()[0] != "M"


def test_execute_plus_agrees_with_solver(plus_src, plus_report):
    proof = generate(plus_report, plus_src.signature)
    rng = random.Random(2024)
    for _ in range(10):
        a, b = rng.randrange(5), rng.randrange(5)
        out = execute(proof, Substitution((("N1", nat(a)), ("N2", nat(b)))), plus_src.signature)
        assert out.get("N3") == nat(a + b)
        check_object(Context(), plus_src.signature, out.get("D"), atom("plus", nat(a), nat(b), nat(a + b)))
        goal = Goal(atom("plus", nat(a), nat(b), var("K")), Context((("K", NAT),)))
        _, answer = next(solve(goal, plus_src.signature))
        assert answer.get("K") == out.get("N3")


APPLICATIONS = [
    "abs [x] x",
    "app (abs [x] x) (abs [y] y)",
    "app (abs [x] x) (app (abs [y] y) (abs [z] z))",
    "app (app (abs [x] x) (abs [y] y)) (abs [z] z)",
]


@pytest.mark.parametrize("term", APPLICATIONS)
def test_execute_subred(subred_src, subred_report, term):
    sig = subred_src.signature
    proof = generate(subred_report, sig)
    d1, ev = next(solve(parse_goal(f"D : eval ({term}) V", sig), sig))
    d2, _ = next(solve(parse_goal(f"D : of ({term}) (arr base base)", sig), sig))
    value = ev.get("V")
    e = parse_goal(f"D : eval ({term}) V", sig).target.spine[0]
    t = atom("arr", const("base"), const("base"))
    out = execute(proof, Substitution((("E", e), ("V", value), ("T", t), ("D1", d1), ("D2", d2))), sig)
    check_object(Context(), sig, out.get("D3"), atom("of", value, t))


def test_execute_without_matching_case(plus_src):
    f, p = _nat_case([Z_BRANCH])
    with pytest.raises(NoCaseMatches):
        execute(p, Substitution((("N", nat(1)),)), plus_src.signature, formula=f)


def _closed_tm(rng, depth, bound=0):
    if bound and (depth <= 0 or rng.randrange(3) == 0):
        return Root(BVar(rng.randrange(bound)))
    if depth > 0 and rng.randrange(2):
        return const("app", _closed_tm(rng, depth - 1, bound), _closed_tm(rng, depth - 1, bound))
    return const("abs", Lam("x", _closed_tm(rng, depth - 1, bound + 1)))


def _typed_pairs(sig, count, seed):
    """随机闭项及其求值与定型推导；剩下的类型变量取 base。"""
    rng = random.Random(seed)
    tp = atom("tp")
    pairs = []
    for _ in range(2000):
        if len(pairs) == count:
            break
        e = _closed_tm(rng, 3)
        try:
            d2, typing = next(solve(Goal(atom("of", e, var("T")), Context((("T", tp),))), sig))
        except (StopIteration, BudgetExhausted):
            continue
        ground = {v: const("base") for v in free_vars(typing.get("T")) + free_vars(d2)}
        t, d2 = subst_fvars(typing.get("T"), ground), subst_fvars(d2, ground)
        d1, ev = next(solve(Goal(atom("eval", e, var("V")), Context((("V", atom("tm")),))), sig))
        pairs.append((e, ev.get("V"), t, d1, d2))
    assert len(pairs) == count
    return pairs


def test_execute_subred_on_random_typed_terms(subred_src, subred_report):
    sig = subred_src.signature
    proof = generate(subred_report, sig)
    for e, value, t, d1, d2 in _typed_pairs(sig, 20, 17):
        out = execute(proof, Substitution((("E", e), ("V", value), ("T", t), ("D1", d1), ("D2", d2))), sig)
        check_object(Context(), sig, out.get("D3"), atom("of", value, t))
        # 逻辑程序也能直接求解同一个目标
        goal = Goal(atom("subred", e, value, t, d1, d2, var("D3")), Context((("D3", atom("of", value, t)),)))
        _, answer = next(solve(goal, sig))
        check_object(Context(), sig, answer.get("D3"), atom("of", value, t))
