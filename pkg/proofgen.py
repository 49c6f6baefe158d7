"""
Proofgen module.

This module is part of the LF Totality Checker project.
"""

# proofgen.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from coverage import CoverageGoal, CoveredLeaf, FailureLeaf, SplitNode, SplittingTrace
from errors import CaseMguMismatch, InstantiationBroken, TraceMismatch
from lf_core import Context, Signature, Substitution, apply_subst
from lp_engine import Clause
from m2_logic import (
    AllIntro, Case, CaseBranch, Formula, Let, Pattern, ProofTerm, Rec, Sequent, Split, Witness,
    eta_var, pattern_head, branch_renaming, family_to_formula, formula_alpha_equal, subst_formula, supply_above,
)
from modes import ModedFamily, clause_contexts
from terms import Const, Obj, Root, subst_fvars
from totality import TotalityReport
from unify import Mgu, NameSupply, NoSolution, as_free_var, case_permutation, split_on

logger = logging.getLogger(__name__)

IH = "IH"


@dataclass(frozen=True)
class ClauseScaffold:
    """子句 c 的上下文 Γ_{c_0} … Γ_{c_m} 及对应的模式矢列 S_{c_0} … S_{c_m}。"""
    clause: Clause
    contexts: Tuple[Context, ...]
    sequents: Tuple[Sequent, ...]


def goal_formula(formula: Formula, mf: ModedFamily, subject_inputs, supply: NameSupply) -> Formula:
    """∃Γ^O[σ^I], D : a σ^I Γ^O.⊤，σ^I 把 ∀ 变量映到给定的输入实参。"""
    sigma = dict(zip(formula.forall.names(), subject_inputs))
    return subst_formula(Formula(Context(), formula.exists), sigma, supply, strict=True)


def _scaffold(cl: Clause, mf: ModedFamily, formula: Formula, supply: NameSupply) -> ClauseScaffold:
    contexts = tuple(clause_contexts(cl, mf))
    goal = goal_formula(formula, mf, mf.input_args(cl.head), supply)
    sequents = tuple(Sequent(ctx, ((IH, formula),), goal) for ctx in contexts)
    return ClauseScaffold(cl, contexts, sequents)


def rsc_holds(g: CoverageGoal, s: Sequent, mf: ModedFamily, formula: Formula) -> bool:
    """输入覆盖目标与矢列的对应：上下文相同，目标公式为 ∃Γ^O[σ^I], D.⊤，且归纳假设可用。"""
    if g.context != s.ctx or IH not in dict(s.assumptions):
        return False
    if len(g.subject.spine) != len(formula.forall):
        return False
    want = goal_formula(formula, mf, g.subject.spine, supply_above(g.context, formula))
    return formula_alpha_equal(want, s.goal)


def roc_holds(g: CoverageGoal, s: Sequent) -> bool:
    """输出覆盖目标与矢列的对应：矢列上下文是目标上下文再加一个 D : A。"""
    if len(s.ctx) != len(g.context) + 1:
        return False
    d, a = s.ctx.entries[-1]
    return Context(s.ctx.entries[:-1]) == g.context and a == g.subject and d not in g.context


# ---------------------------------------------------------------------------
# 证明实例化
# ---------------------------------------------------------------------------

class _Instantiator:
    """p[σ]：重新命名引入的绑定变量，按新上下文重新计算每个 case 分支。"""

    def __init__(self, sig: Signature, supply: NameSupply):
        self.sig = sig
        self.supply = supply

    def subst(self, s: Substitution, sigma: Dict[str, Obj]) -> Substitution:
        return Substitution(tuple((n, subst_fvars(m, sigma)) for n, m in s.bindings), s.domain)

    def run(self, p: ProofTerm, sigma: Dict[str, Obj], old: Context, new: Context) -> ProofTerm:
        if isinstance(p, Witness):
            return Witness(self.subst(p.subst, sigma))
        if isinstance(p, Let):
            return Let(p.name, p.assumption, self.subst(p.subst, sigma), self.run(p.body, sigma, old, new))
        if isinstance(p, Split):
            s = dict(sigma)
            entries = []
            for n, a in p.ctx:
                n2 = self.supply.fresh(n)
                a2 = subst_fvars(a, s)
                entries.append((n2, a2))
                s[n] = eta_var(n2, a2)
            ctx2 = Context(tuple(entries))
            return Split(p.assumption, ctx2, self.run(p.body, s, old.concat(p.ctx), new.concat(ctx2)))
        if isinstance(p, Case):
            return self.case(p, sigma, old, new)
        raise InstantiationBroken("instantiate", f"unexpected {type(p).__name__} in a clause proof")

    def case(self, p: Case, sigma: Dict[str, Obj], old: Context, new: Context) -> Case:
        a_old = old.lookup(p.var)
        if a_old is None:
            raise InstantiationBroken("instantiate", f"{p.var} is not in {old}")
        x = as_free_var(sigma[p.var]) if p.var in sigma else p.var
        if x is None or x not in new:
            raise InstantiationBroken("instantiate", f"case variable {p.var} is instantiated to a non-variable")
        before_old, _, _ = case_permutation(old, p.var)
        before_new, _, after_new = case_permutation(new, x)
        branches = []
        for br in p.branches:
            head = pattern_head(br.pattern)
            decl = self.sig.lookup(head) if head else None
            if decl is None:
                raise InstantiationBroken("instantiate", f"branch head {head} is not a constant")
            cs = split_on(new, x, decl, self.sig, self.supply)
            if isinstance(cs.outcome, NoSolution):
                logger.debug(f"branch {head} on {x} disappears under instantiation")
                continue
            if not isinstance(cs.outcome, Mgu):
                raise InstantiationBroken("instantiate", f"{x} against {head}: {cs.outcome.reason}")
            pat, body_sigma = self.rebuild(br.pattern, sigma, before_old, before_new, after_new, x)
            try:
                branch_renaming(cs, pat)
            except CaseMguMismatch as e:
                raise InstantiationBroken("instantiate", e.detail) from e
            body = self.run(br.body, body_sigma, br.pattern.ctx1.concat(br.pattern.ctx2),
                            pat.ctx1.concat(pat.ctx2))
            branches.append(CaseBranch(pat, body))
        return Case(x, tuple(branches))

    def rebuild(self, pat: Pattern, sigma: Dict[str, Obj], before_old: Context, before_new: Context,
                after_new: Context, x: str) -> Tuple[Pattern, Dict[str, Obj]]:
        """Γ′ 为新的依赖闭包加上重新命名的 Γ_c 剩余变量，Γ″ 为 Γ2[σ] 再代入 x。"""
        s = dict(sigma)
        fresh = []
        for n, a in pat.ctx1:
            if n in before_old:
                continue
            n2 = self.supply.fresh(n)
            a2 = subst_fvars(a, s)
            fresh.append((n2, a2))
            s[n] = eta_var(n2, a2)
        term = subst_fvars(pat.term, s)
        on_x = {x: term}
        ctx2 = Context(tuple((n, subst_fvars(a, on_x)) for n, a in after_new))
        for n, a in pat.ctx2:
            value = sigma.get(n)
            s[n] = subst_fvars(value if value is not None else eta_var(n, a), on_x)
        return Pattern(before_new.concat(fresh), ctx2, term), s


def instantiate_proof(p: ProofTerm, sigma: Mapping[str, Obj], old: Context, new: Context,
                      sig: Signature, supply: NameSupply) -> ProofTerm:
    """把 old 上的子句证明沿 σ : old → new 实例化。"""
    missing = [n for n in old.names() if n not in sigma and n not in new]
    if missing:
        raise InstantiationBroken("instantiate", f"no value for {missing[0]}")
    return _Instantiator(sig, supply).run(p, dict(sigma), old, new)


# ---------------------------------------------------------------------------
# 证明生成
# ---------------------------------------------------------------------------

def _trace_contexts(trace: Optional[SplittingTrace]) -> Iterator[Context]:
    if trace is None:
        return
    if trace.goal is not None:
        yield trace.goal.context
    if isinstance(trace, SplitNode):
        for child in trace.children:
            if child.split is not None:
                yield child.split.child_context
            yield from _trace_contexts(child.subtree)


def initial_step(mf: ModedFamily, body: Optional[ProofTerm] = None) -> Tuple[Rec, Sequent]:
    """rec IH. Λ Γ^I. ·，返回部分证明与前沿矢列 Γ^I; IH ⊢ ∃Γ^O, D.⊤。"""
    formula = family_to_formula(mf)
    frontier = Sequent(formula.forall, ((IH, formula),), Formula(Context(), formula.exists))
    placeholder = body if body is not None else Witness(Substitution())
    return Rec(IH, formula, AllIntro(formula.forall, placeholder)), frontier


class ProofGenerator:
    def __init__(self, report: TotalityReport, sig: Signature, supply: Optional[NameSupply] = None):
        self.report = report
        self.mf = report.mode
        self.sig = sig
        self.formula = family_to_formula(self.mf)
        if supply is None:
            contexts = [c for t in [report.input_trace, *report.output_traces.values()]
                        for c in _trace_contexts(t)]
            supply = supply_above(self.formula, *contexts)
        self.supply = supply
        self.clauses = {cl.const: cl for cl in report.clauses}
        self._clause_proofs: Dict[str, ProofTerm] = {}

    # -- input coverage ----------------------------------------------------

    def replay_input_trace(self, trace: SplittingTrace, ctx: Context) -> ProofTerm:
        goal = trace.goal
        if goal is not None:
            seq = Sequent(ctx, ((IH, self.formula),),
                          goal_formula(self.formula, self.mf, goal.subject.spine, self.supply))
            if not rsc_holds(goal, seq, self.mf, self.formula):
                raise TraceMismatch("replay", f"goal {goal} does not correspond to the sequent over {ctx}")
        if isinstance(trace, SplitNode):
            branches = []
            for child in trace.children:
                cs = child.split
                if cs is None or cs.new_context is None:
                    raise TraceMismatch("replay", f"split on {trace.var} with {child.const} was not recorded")
                pat = Pattern(cs.new_context, cs.rest, cs.term)
                branches.append(CaseBranch(pat, self.replay_input_trace(child.subtree, cs.child_context)))
            return Case(trace.var, tuple(branches))
        if isinstance(trace, CoveredLeaf):
            cl = self.clauses.get(trace.pattern)
            if cl is None:
                raise TraceMismatch("replay", f"leaf covered by unknown clause {trace.pattern}")
            start = clause_contexts(cl, self.mf)[0]
            unbound = [n for n in start.names() if n not in trace.subst]
            if unbound:
                raise InstantiationBroken("replay", f"{cl.const} leaf leaves {unbound[0]} undetermined")
            return instantiate_proof(self.clause_proof(cl), trace.subst.as_dict(), start, ctx,
                                     self.sig, self.supply)
        if isinstance(trace, FailureLeaf):
            raise TraceMismatch("replay", f"trace has an uncovered leaf: {trace.detail}")
        raise TraceMismatch("replay", f"unknown trace node {trace!r}")

    # -- clauses -----------------------------------------------------------

    def clause_proof(self, cl: Clause) -> ProofTerm:
        if cl.const not in self._clause_proofs:
            self._clause_proofs[cl.const] = self.translate_clause(cl)
        return self._clause_proofs[cl.const]

    def witness(self, cl: Clause, ctx: Context) -> Witness:
        """σ_m = (σ^O_c, (c Γ_c D_m … D_1)/D)"""
        args = []
        for name, fam, _ in cl.binders:
            if name not in ctx:
                raise InstantiationBroken("witness", f"{cl.const}: {name} is not determined by the premises")
            args.append(eta_var(name, fam))
        values = list(self.mf.output_subst(cl.head).bindings)
        d = self.formula.exists.names()[-1]
        values.append((d, Root(Const(cl.const), tuple(args))))
        return Witness(Substitution(tuple(values)))

    def translate_clause(self, cl: Clause) -> ProofTerm:
        contexts = clause_contexts(cl, self.mf)
        proof: ProofTerm = self.witness(cl, contexts[-1])
        for i in range(len(cl.premises), 0, -1):
            proof = self.premise_step(cl, i, contexts, proof)
        logger.debug(f"translated clause {cl.const}")
        return proof

    def premise_step(self, cl: Clause, i: int, contexts: List[Context], inner: ProofTerm) -> ProofTerm:
        """let y = IH σ^I_i in split y as (Γ^O, d) in <输出覆盖的 case 树>"""
        trace = self.report.output_traces.get((cl.const, i))
        if trace is None or trace.goal is None:
            raise TraceMismatch("translate", f"no output trace for {cl.const} premise {i}")
        prev = contexts[i - 1]
        dname, prem = cl.premises[i - 1]
        root = trace.goal
        outs = root.context.without(prev.names())
        d = self.supply.fresh("D")
        split_ctx = outs.extend(d, root.subject)
        y = self.supply.fresh("y")
        body = self.replay_output_trace(trace, prev.concat(split_ctx), d, (dname, contexts[i]), inner)
        return Let(y, IH, self.mf.input_subst(prem), Split(y, split_ctx, body))

    # -- output coverage ---------------------------------------------------

    def replay_output_trace(self, trace: SplittingTrace, ctx: Context, d: str,
                            pattern: Tuple[str, Context], inner: ProofTerm) -> ProofTerm:
        goal = trace.goal
        if goal is not None and not roc_holds(goal, Sequent(ctx, ((IH, self.formula),), self.formula)):
            raise TraceMismatch("replay", f"output goal {goal} does not correspond to {ctx}")
        if isinstance(trace, SplitNode):
            a = ctx.lookup(d)
            branches = []
            for child in trace.children:
                cs = child.split
                if cs is None or cs.new_context is None:
                    raise TraceMismatch("replay", f"split on {trace.var} with {child.const} was not recorded")
                pat = Pattern(cs.new_context, cs.rest.extend(d, apply_subst(a, cs.subst)), cs.term)
                body = self.replay_output_trace(child.subtree, pat.ctx1.concat(pat.ctx2), d, pattern, inner)
                branches.append(CaseBranch(pat, body))
            return Case(trace.var, tuple(branches))
        if isinstance(trace, CoveredLeaf):
            dname, pattern_ctx = pattern
            rho = trace.subst.as_dict()
            for v, m in rho.items():
                if as_free_var(m) is None:
                    raise InstantiationBroken("translate", f"output leaf binds {v} to a non-variable")
            rho[dname] = eta_var(d, ctx.lookup(d))
            return instantiate_proof(inner, rho, pattern_ctx, ctx, self.sig, self.supply)
        if isinstance(trace, FailureLeaf):
            raise TraceMismatch("replay", f"output trace has an uncovered leaf: {trace.detail}")
        raise TraceMismatch("replay", f"unknown trace node {trace!r}")

    # -- whole family ------------------------------------------------------

    def generate(self) -> Rec:
        if self.report.input_trace is None:
            raise TraceMismatch("generate", f"{self.mf.family} has no input coverage trace")
        body = self.replay_input_trace(self.report.input_trace, self.formula.forall)
        proof, _ = initial_step(self.mf, body)
        logger.info(f"generated proof for {self.mf.family}")
        return proof


def generate(report: TotalityReport, sig: Signature, supply: Optional[NameSupply] = None) -> Rec:
    return ProofGenerator(report, sig, supply).generate()


def translate_clause(report: TotalityReport, sig: Signature, const: str,
                     supply: Optional[NameSupply] = None) -> ProofTerm:
    gen = ProofGenerator(report, sig, supply)
    return gen.translate_clause(gen.clauses[const])


def clause_sequent(report: TotalityReport, const: str) -> Sequent:
    """S_{c_0}，用于单独检查子句证明。"""
    mf = report.mode
    cl = next(c for c in report.clauses if c.const == const)
    formula = family_to_formula(mf)
    return _scaffold(cl, mf, formula, supply_above(formula, cl.params)).sequents[0]
