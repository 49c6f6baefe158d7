"""
Tests for the logic programming engine.

This module is part of the LF Totality Checker project.
"""

# test_lp_engine.py
import itertools
import random

import pytest

from errors import BudgetExhausted
from lf_core import Context, apply_subst, check_object
from lp_engine import Goal, LogicEngine, clauses_for, solve
from terms import BVar, Lam, Root, atom, const, free_vars, show, var
from twelf_parser import parse_goal
from unify import match


def nat(n):
    t = const("z")
    for _ in range(n):
        t = const("s", t)
    return t


def test_clause_premise_order(eval_src):
    [ev_app] = [cl for cl in clauses_for(eval_src.signature, "eval") if cl.const == "ev-app"]
    # 最内层的 <- 前提最先求解
    first = ev_app.premises[0][1]
    assert first.const == "eval"
    assert first.spine[1].head.name == "abs"


@pytest.mark.parametrize("a, b", [(0, 0), (0, 3), (2, 1), (3, 4)])
def test_plus(plus_src, a, b):
    goal = Goal(atom("plus", nat(a), nat(b), var("N")), Context((("N", atom("nat")),)))
    proof, answer = next(solve(goal, plus_src.signature))
    assert answer.get("N") == nat(a + b)
    check_object(Context(), plus_src.signature, proof, atom("plus", nat(a), nat(b), nat(a + b)))


def test_plus_random(plus_src):
    rng = random.Random(7)
    for _ in range(10):
        a, b = rng.randrange(6), rng.randrange(6)
        goal = parse_goal(f"D : plus {' '.join(['(s'] * a)} z{')' * a} z N", plus_src.signature)
        _, answer = next(solve(goal, plus_src.signature))
        assert answer.get("N") == nat(a)


def test_eval_identity_application(eval_src):
    goal = parse_goal("D : eval (app (abs [x] x) (abs [y] y)) V", eval_src.signature)
    proof, answer = next(solve(goal, eval_src.signature))
    assert show(answer.get("V")) == "abs ([y] y)"
    assert proof.head.name == "ev-app"


def test_hypothetical_premise(subred_src):
    goal = parse_goal("D : of (abs [x] x) (arr base base)", subred_src.signature)
    proof, _ = next(solve(goal, subred_src.signature))
    assert proof.head.name == "of-abs"


def test_no_solution(plus_src):
    goal = Goal(atom("plus", nat(1), nat(1), nat(3)))
    assert list(solve(goal, plus_src.signature)) == []


def test_depth_budget(plus_src):
    goal = Goal(atom("plus", nat(30), nat(0), var("N")), Context((("N", atom("nat")),)), depth=5)
    with pytest.raises(BudgetExhausted):
        next(solve(goal, plus_src.signature))


def test_solutions_are_enumerated_lazily(plus_src):
    goal = Goal(atom("plus", var("A"), var("B"), nat(2)),
                Context((("A", atom("nat")), ("B", atom("nat")))))
    engine = LogicEngine(plus_src.signature)
    answers = list(itertools.islice(engine.solve(goal), 3))
    assert len(answers) == 3


def _derivable(fam, sig, family):
    """朴素的推导搜索：闭合目标逐个与子句头匹配，再递归检查前提。"""
    for cl in clauses_for(sig, family):
        sigma = match(cl.head, fam, cl.params)
        if sigma is None:
            continue
        if all(_derivable(apply_subst(prem, sigma), sig, family) for _, prem in cl.premises):
            return True
    return False


@pytest.mark.parametrize("a", range(4))
def test_plus_agrees_with_brute_force_search(plus_src, a):
    sig = plus_src.signature
    for b in range(4):
        goal = Goal(atom("plus", nat(a), nat(b), var("N")), Context((("N", atom("nat")),)))
        found = [answer.get("N") for _, answer in solve(goal, sig)]
        expected = [nat(c) for c in range(8) if _derivable(atom("plus", nat(a), nat(b), nat(c)), sig, "plus")]
        assert found == expected


def test_ground_inputs_give_closed_outputs(plus_src):
    for a in range(4):
        for b in range(4):
            goal = Goal(atom("plus", nat(a), nat(b), var("N")), Context((("N", atom("nat")),)))
            for proof, answer in solve(goal, plus_src.signature):
                assert free_vars(answer.get("N")) == []
                assert free_vars(proof) == []


def _closed_tm(rng, depth, bound=0):
    if bound and (depth <= 0 or rng.randrange(3) == 0):
        return Root(BVar(rng.randrange(bound)))
    if depth > 0 and rng.randrange(2):
        return const("app", _closed_tm(rng, depth - 1, bound), _closed_tm(rng, depth - 1, bound))
    return const("abs", Lam("x", _closed_tm(rng, depth - 1, bound + 1)))


def test_eval_outputs_are_closed(eval_src):
    rng = random.Random(21)
    for _ in range(40):
        e = _closed_tm(rng, 3)
        goal = Goal(atom("eval", e, var("V")), Context((("V", atom("tm")),)), depth=60)
        try:
            proof, answer = next(solve(goal, eval_src.signature))
        except BudgetExhausted:
            # 发散的项（例如自应用）
            continue
        assert free_vars(answer.get("V")) == []
        assert free_vars(proof) == []
        check_object(Context(), eval_src.signature, proof, atom("eval", e, answer.get("V")))


def test_moded_search_terminates_on_ground_inputs(plus_src):
    for a in range(5):
        for b in range(5):
            goal = Goal(atom("plus", nat(a), nat(b), var("N")), Context((("N", atom("nat")),)), depth=1000)
            # 整个搜索空间走完，只有一个答案
            assert len(list(solve(goal, plus_src.signature))) == 1
