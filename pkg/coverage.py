"""
Coverage module.

This module is part of the LF Totality Checker project.
"""

# coverage.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from errors import (
    CoverageFailure, FunctionTypeSplit, IllTyped, LFError, NotMatchable,
    OutputCoverageFailure, SplitUndecided, UnificationUndecided,
)
from lf_core import Context, Signature, Substitution, apply_subst, check_subst_typing, synthesize
from lp_engine import Clause, clauses_for, target_family
from modes import ModedFamily, clause_contexts, input_variables
from terms import (
    Atom, Const, FVar, Lam, Pi, Root, Term, TYPE, Fam, Obj,
    abstract, eta_expand, free_vars, fresh_local, open_var, show, subst_fvars,
)
from unify import (
    CaseSplit, Mgu, NameSupply, NoSolution, OutsideFragment,
    as_free_var, is_renaming, match, open_constant, split_on,
)

logger = logging.getLogger(__name__)

DEFAULT_SPLIT_BUDGET = 200

INPUT_GOAL = "input-goal"
INPUT_PATTERN = "input-pattern"
OUTPUT_GOAL = "output-goal"
OUTPUT_PATTERN = "output-pattern"


@dataclass(frozen=True)
class CoverageGoal:
    """Γ ⊢ U : V。输入目标的 U 只含输入参数 a σ^I，V 为 ΠΓ^O[σ^I].type。"""
    context: Context
    subject: Atom
    classifier: Term
    kind: str = INPUT_GOAL

    def __str__(self) -> str:
        return f"{self.context} |- {show(self.subject)} : {show(self.classifier)}"


@dataclass(frozen=True)
class CoveragePattern:
    ident: str
    context: Context
    subject: Atom
    classifier: Term
    kind: str = INPUT_PATTERN


# ---------------------------------------------------------------------------
# 分裂轨迹
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitChild:
    const: str
    mgu: Substitution
    subtree: "SplittingTrace"
    split: Optional[CaseSplit] = field(default=None, compare=False)


@dataclass(frozen=True)
class SplitNode:
    var: str
    children: Tuple[SplitChild, ...]
    goal: Optional[CoverageGoal] = field(default=None, compare=False)


@dataclass(frozen=True)
class CoveredLeaf:
    pattern: str
    subst: Substitution
    goal: Optional[CoverageGoal] = field(default=None, compare=False)


@dataclass(frozen=True)
class FailureLeaf:
    detail: str
    goal: Optional[CoverageGoal] = field(default=None, compare=False)


SplittingTrace = Union[SplitNode, CoveredLeaf, FailureLeaf]


def leaves(trace: SplittingTrace) -> List[SplittingTrace]:
    if isinstance(trace, SplitNode):
        out: List[SplittingTrace] = []
        for child in trace.children:
            out.extend(leaves(child.subtree))
        return out
    return [trace]


def count_splits(trace: SplittingTrace) -> int:
    if isinstance(trace, SplitNode):
        return 1 + sum(count_splits(c.subtree) for c in trace.children)
    return 0


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self, goal: CoverageGoal) -> None:
        self.used += 1
        if self.used > self.limit:
            raise CoverageFailure(str(goal), f"split budget of {self.limit} exhausted")


# ---------------------------------------------------------------------------
# 输入覆盖目标与模式
# ---------------------------------------------------------------------------

def _outputs_classifier(mf: ModedFamily, sigma: Dict[str, Obj]) -> Term:
    """ΠΓ^O[σ].type"""
    body: Term = TYPE
    for name, a in reversed(mf.outputs.entries):
        body = Pi(name, subst_fvars(a, sigma), abstract(body, name))
    return body


def input_goal(mf: ModedFamily) -> CoverageGoal:
    ctx = mf.inputs
    args = tuple(eta_expand(FVar(n), a) for n, a in ctx)
    return CoverageGoal(ctx, Atom(mf.family, args), _outputs_classifier(mf, {}), INPUT_GOAL)


def input_pattern(cl: Clause, mf: ModedFamily) -> CoveragePattern:
    sigma = mf.input_subst(cl.head)
    return CoveragePattern(cl.const, input_variables(cl, mf), Atom(mf.family, tuple(mf.input_args(cl.head))),
                           _outputs_classifier(mf, sigma.as_dict()), INPUT_PATTERN)


def input_goal_and_patterns(mf: ModedFamily, sig: Signature) -> Tuple[CoverageGoal, List[CoveragePattern]]:
    return input_goal(mf), [input_pattern(cl, mf) for cl in clauses_for(sig, mf.family)]


# ---------------------------------------------------------------------------
# 分裂
# ---------------------------------------------------------------------------

def _constants_for(a_x: Fam, sig: Signature):
    return [d for d in sig.objects() if target_family(d.classifier) == a_x.const]


def split_goal(g: CoverageGoal, x: str, sig: Signature,
               supply: Optional[NameSupply] = None) -> List[Tuple[CaseSplit, CoverageGoal]]:
    """对 x 按签名常量分裂；返回 (分裂信息, 子目标) 列表。"""
    supply = supply if supply is not None else NameSupply()
    a_x = g.context.lookup(x)
    if not isinstance(a_x, Atom):
        raise FunctionTypeSplit("split", f"{x} : {show(a_x)} is not atomic")
    children = []
    for decl in _constants_for(a_x, sig):
        cs = split_on(g.context, x, decl, sig, supply)
        if isinstance(cs.outcome, NoSolution):
            continue
        if isinstance(cs.outcome, OutsideFragment):
            raise SplitUndecided("split", f"{x} against {decl.name}: {cs.outcome.reason}")
        child = CoverageGoal(cs.child_context, apply_subst(g.subject, cs.subst),
                             apply_subst(g.classifier, cs.subst), g.kind)
        logger.debug(f"split {x} with {decl.name}: {child}")
        children.append((cs, child))
    return children


def _walk(p: Term, t: Term, pvars: frozenset, gvars: frozenset, out: List[str]) -> bool:
    """并行遍历模式与目标；记录模式为构造子而目标为变量的位置。返回 False 表示冲突。"""
    if isinstance(p, Lam) and isinstance(t, Lam):
        x = fresh_local("c")
        return _walk(open_var(p.body, x), open_var(t.body, x), pvars, gvars, out)
    if isinstance(p, Atom) and isinstance(t, Atom):
        if p.const != t.const or len(p.spine) != len(t.spine):
            return False
        return all(_walk(a, b, pvars, gvars, out) for a, b in zip(p.spine, t.spine))
    if not isinstance(p, Root) or not isinstance(t, Root):
        return True
    ph, th = p.head, t.head
    if isinstance(ph, FVar) and ph.name in pvars:
        return True
    if isinstance(th, FVar) and th.name in gvars:
        if not t.spine and isinstance(ph, Const) and th.name not in out:
            out.append(th.name)
        return True
    if ph != th:
        return False
    return all(_walk(a, b, pvars, gvars, out) for a, b in zip(p.spine, t.spine))


def split_candidates(g: CoverageGoal, pats: Sequence[CoveragePattern],
                     positions: Sequence[int], restrict: Optional[Sequence[str]] = None) -> List[str]:
    """
    在不冲突的模式中，目标变量对上构造子项的位置即为候选。
    按 positions 的顺序（显式参数在前）。
    """
    gvars = frozenset(restrict if restrict is not None else g.context.names())
    live = []
    for pat in pats:
        if _walk(pat.subject, g.subject, frozenset(pat.context.names()), gvars, []):
            live.append(pat)
    out: List[str] = []
    for pos in positions:
        for pat in live:
            _walk(pat.subject.spine[pos], g.subject.spine[pos],
                  frozenset(pat.context.names()), gvars, out)
    return out


# ---------------------------------------------------------------------------
# 立即覆盖
# ---------------------------------------------------------------------------

def _complete_by_types(pat: CoveragePattern, g: CoverageGoal, sigma: Substitution,
                       sig: Optional[Signature]) -> Substitution:
    """只在类型中出现的模式变量：用已绑定变量的类型再做一次匹配。"""
    bound = dict(sigma.bindings)
    missing = [n for n in pat.context.names() if n not in bound]
    while missing and sig is not None:
        progress = False
        for name, a in pat.context:
            if name not in bound or not any(v in missing for v in free_vars(a)):
                continue
            try:
                _, have = synthesize(bound[name], g.context, sig)
            except LFError:
                continue
            expected = subst_fvars(a, {k: v for k, v in bound.items() if k not in missing})
            extra = match(expected, have, [v for v in missing if v in free_vars(expected)])
            if extra is None:
                continue
            bound.update(extra.bindings)
            missing = [n for n in missing if n not in bound]
            progress = True
        if not progress:
            break
    ordered = tuple((n, bound[n]) for n in pat.context.names() if n in bound)
    return Substitution(ordered, pat.context)


def covers(pat: CoveragePattern, g: CoverageGoal, sig: Optional[Signature] = None) -> Optional[Substitution]:
    try:
        sigma = match(pat.subject, g.subject, pat.context)
    except UnificationUndecided:
        return None
    if sigma is None:
        return None
    sigma = _complete_by_types(pat, g, sigma, sig)
    if sig is not None:
        try:
            check_subst_typing(g.context, sig, sigma, pat.context)
        except IllTyped:
            return None
    return sigma


def immediately_covered(g: CoverageGoal, pats: Sequence[CoveragePattern],
                        sig: Optional[Signature] = None) -> Optional[Tuple[str, Substitution]]:
    for pat in pats:
        sigma = covers(pat, g, sig)
        if sigma is not None:
            return pat.ident, sigma
    return None


# ---------------------------------------------------------------------------
# 输入覆盖
# ---------------------------------------------------------------------------

def _input_positions(mf: ModedFamily) -> List[int]:
    implicit = [mf.implicit[i] for i in mf.order if mf.polarities[i] == "+"]
    explicit = [k for k, imp in enumerate(implicit) if not imp]
    return explicit + [k for k, imp in enumerate(implicit) if imp]


def check_input_coverage(mf: ModedFamily, sig: Signature, budget: int = DEFAULT_SPLIT_BUDGET,
                         supply: Optional[NameSupply] = None) -> SplittingTrace:
    supply = supply if supply is not None else NameSupply()
    goal, pats = input_goal_and_patterns(mf, sig)
    positions = _input_positions(mf)
    spent = _Budget(budget)

    def cover(g: CoverageGoal) -> SplittingTrace:
        hit = immediately_covered(g, pats, sig)
        if hit is not None:
            logger.debug(f"covered by {hit[0]}: {g}")
            return CoveredLeaf(hit[0], hit[1], g)
        for x in split_candidates(g, pats, positions):
            try:
                children = split_goal(g, x, sig, supply)
            except (SplitUndecided, FunctionTypeSplit) as e:
                logger.warning(f"cannot split {x}: {e}")
                continue
            spent.spend(g)
            return SplitNode(x, tuple(SplitChild(cs.const, cs.subst.restrict(cs.before.names() + [x]),
                                                 cover(child), cs)
                                      for cs, child in children), g)
        raise CoverageFailure(str(g), "no pattern covers the goal")

    trace = cover(goal)
    logger.info(f"input coverage for {mf.family}: {len(leaves(trace))} leaves, {count_splits(trace)} splits")
    return trace


# ---------------------------------------------------------------------------
# 输出覆盖
# ---------------------------------------------------------------------------

def output_goal_and_pattern(cl: Clause, i: int, mf: ModedFamily,
                            supply: NameSupply) -> Tuple[CoverageGoal, CoveragePattern]:
    """第 i 个前提：Γ_{c_{i-1}}, Γ^O[σ^I_i] ⊢ a σ^I_i Γ^O 与 Γ_{c_{i-1}}, Γ^O_i ⊢ A_i。"""
    contexts = clause_contexts(cl, mf)
    prev = contexts[i - 1]
    dname, prem = cl.premises[i - 1]
    values: Dict[str, Obj] = dict(mf.input_subst(prem).bindings)
    fresh: List[Tuple[str, Fam]] = []
    for name, a in mf.outputs:
        n = supply.fresh(name)
        ty = subst_fvars(a, values)
        fresh.append((n, ty))
        values[name] = eta_expand(FVar(n), ty)
    goal = CoverageGoal(prev.concat(fresh), mf.atom_of(values), TYPE, OUTPUT_GOAL)
    outs = contexts[i].without(prev.names() + [dname])
    pattern = CoveragePattern(str(i), prev.concat(outs), prem, TYPE, OUTPUT_PATTERN)
    return goal, pattern


def output_split(g: CoverageGoal, x: str, sig: Signature, supply: NameSupply) -> List[Tuple[CaseSplit, CoverageGoal]]:
    """只允许实例化 x：A_x 必须是 A_c 的实例。"""
    a_x = g.context.lookup(x)
    if not isinstance(a_x, Atom):
        raise FunctionTypeSplit("output-split", f"{x} : {show(a_x)} is not atomic")
    children = []
    for decl in _constants_for(a_x, sig):
        gamma_c, a_c, _ = open_constant(decl, supply)
        try:
            inst = match(a_c, a_x, gamma_c, supply)
        except UnificationUndecided as e:
            raise SplitUndecided("output-split", f"{x} against {decl.name}: {e.detail}") from e
        cs = split_on(g.context, x, decl, sig, supply)
        if isinstance(cs.outcome, OutsideFragment):
            raise SplitUndecided("output-split", f"{x} against {decl.name}: {cs.outcome.reason}")
        if isinstance(cs.outcome, NoSolution):
            continue
        if inst is None:
            raise NotMatchable("output-split", f"{show(a_x)} is not an instance of {decl.name}'s type")
        for v in cs.before.names():
            if v in cs.subst and as_free_var(cs.subst.get(v)) != v:
                raise NotMatchable("output-split", f"splitting {x} with {decl.name} instantiates {v}")
        child = CoverageGoal(cs.child_context, apply_subst(g.subject, cs.subst), g.classifier, g.kind)
        logger.debug(f"output split {x} with {decl.name}: {child}")
        children.append((cs, child))
    return children


def _renaming_cover(pat: CoveragePattern, g: CoverageGoal, outputs: Sequence[str]) -> Optional[Substitution]:
    own = pat.context.without(g.context.names())
    try:
        sigma = match(pat.subject, g.subject, own)
    except UnificationUndecided:
        return None
    if sigma is None or len(sigma) != len(own):
        return None
    if not is_renaming(sigma, outputs):
        return None
    return sigma


def check_output_coverage(cl: Clause, i: int, mf: ModedFamily, sig: Signature,
                          budget: int = DEFAULT_SPLIT_BUDGET,
                          supply: Optional[NameSupply] = None) -> SplittingTrace:
    supply = supply if supply is not None else NameSupply()
    goal, pat = output_goal_and_pattern(cl, i, mf, supply)
    fixed = clause_contexts(cl, mf)[i - 1].names()
    spent = _Budget(budget)
    positions = list(range(len(goal.subject.spine)))

    def cover(g: CoverageGoal) -> SplittingTrace:
        outputs = [n for n in g.context.names() if n not in fixed]
        sigma = _renaming_cover(pat, g, outputs)
        if sigma is not None:
            return CoveredLeaf(pat.ident, sigma, g)
        for x in split_candidates(g, [pat], positions, outputs):
            try:
                children = output_split(g, x, sig, supply)
            except (SplitUndecided, FunctionTypeSplit) as e:
                logger.warning(f"cannot split output {x}: {e}")
                continue
            spent.spend(g)
            return SplitNode(x, tuple(SplitChild(cs.const, cs.subst.restrict(cs.before.names() + [x]),
                                                 cover(child), cs)
                                      for cs, child in children), g)
        raise OutputCoverageFailure(cl.const, i, str(g))

    trace = cover(goal)
    logger.debug(f"output coverage {cl.const} premise {i}: {len(leaves(trace))} leaves")
    return trace
