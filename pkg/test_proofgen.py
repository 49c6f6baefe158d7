"""
Tests for certificate generation.

This module is part of the LF Totality Checker project.
"""

# test_proofgen.py
import random

import pytest

from coverage import CoveredLeaf, FailureLeaf, leaves
from errors import InstantiationBroken, TraceMismatch
from lf_core import Context
from m2_logic import (
    AllIntro, Case, Let, Rec, Sequent, Split, Witness, check_proof, eta_var, family_to_formula,
    proofterm_terminates, subst_formula, supply_above,
)
from proofgen import (
    IH, ProofGenerator, clause_sequent, generate, goal_formula, initial_step, instantiate_proof, roc_holds,
    rsc_holds, translate_clause,
)
from terms import atom, const, subst_fvars, var
from unify import NameSupply


def _check(report, sig, proof):
    check_proof(Sequent(Context(), (), proof.formula, proof), sig, report.order)


def test_initial_step_shape(plus_report):
    proof, frontier = initial_step(plus_report.mode)
    assert isinstance(proof, Rec) and proof.name == IH
    assert isinstance(proof.body, AllIntro)
    assert frontier.ctx == proof.formula.forall
    assert frontier.goal.exists == proof.formula.exists


def test_plus_certificate(plus_src, plus_report):
    proof = generate(plus_report, plus_src.signature)
    assert isinstance(proof.body.body, Case)
    _check(plus_report, plus_src.signature, proof)
    assert proofterm_terminates(proof.body, IH, plus_report.order, plus_src.signature,
                                proof.formula)


def test_subred_certificate(subred_src, subred_report):
    proof = generate(subred_report, subred_src.signature)
    case = proof.body.body
    assert isinstance(case, Case) and case.var == "D1"
    heads = sorted(br.pattern.term.head.name for br in case.branches)
    assert heads == ["ev-abs", "ev-app"]
    _check(subred_report, subred_src.signature, proof)


def test_generation_is_deterministic(subred_src, subred_report):
    first = generate(subred_report, subred_src.signature)
    second = generate(subred_report, subred_src.signature)
    assert first == second


def test_premise_free_clause_translates_to_witness(plus_src, plus_report):
    p = translate_clause(plus_report, plus_src.signature, "plus-z")
    assert isinstance(p, Witness)
    assert p.subst.names()[-1] == "D"


def test_clause_with_premise_translates_to_let_split(plus_src, plus_report):
    p = translate_clause(plus_report, plus_src.signature, "plus-s")
    assert isinstance(p, Let) and p.assumption == IH
    assert isinstance(p.body, Split)


@pytest.mark.parametrize("const", ["plus-z", "plus-s"])
def test_clause_proofs_check_standalone(plus_src, plus_report, const):
    seq = clause_sequent(plus_report, const)
    p = translate_clause(plus_report, plus_src.signature, const)
    check_proof(Sequent(seq.ctx, seq.assumptions, seq.goal, p), plus_src.signature, plus_report.order)


def test_goal_formula_substitutes_inputs(plus_report):
    mf = plus_report.mode
    leaf = plus_report.input_trace.children[0].subtree
    assert isinstance(leaf, CoveredLeaf)
    f = goal_formula(family_to_formula(mf), mf, leaf.goal.subject.spine, NameSupply(100))
    assert not f.forall
    assert f.exists.names()[-1] == "D"


def _instantiate_and_check(src, report, const_name, sigma, new):
    sig = src.signature
    seq = clause_sequent(report, const_name)
    p = translate_clause(report, sig, const_name)
    supply = supply_above(seq.goal, seq.ctx, new, p)
    q = instantiate_proof(p, sigma, seq.ctx, new, sig, supply)
    goal = subst_formula(seq.goal, sigma, supply)
    check_proof(Sequent(new, seq.assumptions, goal, q), sig, report.order)
    return q


@pytest.mark.parametrize("const_name", ["plus-z", "plus-s"])
def test_renaming_instances_still_check(plus_src, plus_report, const_name):
    seq = clause_sequent(plus_report, const_name)
    renaming = {n: f"R{k}" for k, n in enumerate(seq.ctx.names())}
    sigma = {n: var(m) for n, m in renaming.items()}
    new = Context(tuple((renaming[n], subst_fvars(a, sigma)) for n, a in seq.ctx))
    _instantiate_and_check(plus_src, plus_report, const_name, sigma, new)


def test_closed_instance_still_checks(plus_src, plus_report):
    seq = clause_sequent(plus_report, "plus-s")
    n1, n2 = seq.ctx.names()
    sigma = {n1: const("s", var("A")), n2: const("z")}
    q = _instantiate_and_check(plus_src, plus_report, "plus-s", sigma, Context((("A", atom("nat")),)))
    assert isinstance(q, Let)
    assert const("s", var("A")) in [m for _, m in q.subst.bindings]


def test_instantiation_needs_every_variable(plus_src, plus_report):
    seq = clause_sequent(plus_report, "plus-s")
    p = translate_clause(plus_report, plus_src.signature, "plus-s")
    with pytest.raises(InstantiationBroken):
        instantiate_proof(p, {}, seq.ctx, Context(), plus_src.signature, NameSupply(100))


def test_input_leaves_correspond_to_sequents(plus_report):
    mf = plus_report.mode
    formula = family_to_formula(mf)
    for leaf in leaves(plus_report.input_trace):
        g = leaf.goal
        goal = goal_formula(formula, mf, g.subject.spine, supply_above(g.context, formula))
        assert rsc_holds(g, Sequent(g.context, ((IH, formula),), goal), mf, formula)
        assert not rsc_holds(g, Sequent(g.context, (), goal), mf, formula)


def test_output_goal_corresponds_to_extended_sequent(plus_report):
    formula = family_to_formula(plus_report.mode)
    g = plus_report.output_traces[("plus-s", 1)].goal
    extended = Sequent(g.context.extend("D_99", g.subject), ((IH, formula),), formula)
    assert roc_holds(g, extended)
    assert not roc_holds(g, Sequent(g.context, ((IH, formula),), formula))


def test_replay_rejects_uncovered_leaves(plus_src, plus_report):
    gen = ProofGenerator(plus_report, plus_src.signature)
    with pytest.raises(TraceMismatch):
        gen.replay_input_trace(FailureLeaf("missing"), gen.formula.forall)


def test_random_renamings_still_check(plus_src, plus_report, subred_src, subred_report):
    rng = random.Random(31)
    cases = [(plus_src, plus_report, "plus-z"), (plus_src, plus_report, "plus-s"),
             (subred_src, subred_report, "sr-app"), (subred_src, subred_report, "sr-abs")]
    for _ in range(100):
        src, report, const_name = rng.choice(cases)
        seq = clause_sequent(report, const_name)
        fresh = [f"{rng.choice('RQ')}{i}" for i in rng.sample(range(1000), len(seq.ctx))]
        renaming = dict(zip(seq.ctx.names(), fresh))
        # 函数类型的变量要 η-展开
        sigma = {n: eta_var(renaming[n], a) for n, a in seq.ctx}
        new = Context(tuple((renaming[n], subst_fvars(a, sigma)) for n, a in seq.ctx))
        _instantiate_and_check(src, report, const_name, sigma, new)


def test_subred_certificate_terminates(subred_src, subred_report):
    proof = generate(subred_report, subred_src.signature)
    assert proofterm_terminates(proof.body, IH, subred_report.order, subred_src.signature, proof.formula)
