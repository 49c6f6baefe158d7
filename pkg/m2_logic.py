"""
M2 Logic module.

This module is part of the LF Totality Checker project.
"""

# m2_logic.py
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from errors import (
    CaseMguMismatch, CaseNotExhaustive, FuelExhausted, IllTyped, LFError,
    NoCaseMatches, NonTerminatingRec, ProofCheckError, ScopeError, UnificationUndecided,
)
from lf_core import Context, Signature, Substitution, check_subst_typing, synthesize
from termination import TerminationOrder, order_decreases
from terms import FVar, Root, Term, Obj, eta_expand, free_vars, show, subst_fvars
from unify import CaseSplit, Mgu, NameSupply, NoSolution, as_free_var, match, split_on

logger = logging.getLogger(__name__)

DEFAULT_FUEL = 10 ** 6


# ---------------------------------------------------------------------------
# 公式与证明项
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Formula:
    """∀Γ1.∃Γ2.⊤"""
    forall: Context = Context()
    exists: Context = Context()

    def binders(self) -> List[Tuple[str, Term]]:
        return list(self.forall.entries) + list(self.exists.entries)

    def free_vars(self) -> List[str]:
        bound: set = set()
        out: List[str] = []
        for n, a in self.binders():
            for v in free_vars(a):
                if v not in bound and v not in out:
                    out.append(v)
            bound.add(n)
        return out

    def __str__(self) -> str:
        parts = []
        if self.forall:
            parts.append(f"all {{{self.forall}}}")
        if self.exists:
            parts.append(f"exists {{{self.exists}}}")
        return " ".join(parts + ["T"])


@dataclass(frozen=True)
class Pattern:
    ctx1: Context
    ctx2: Context
    term: Obj


@dataclass(frozen=True)
class CaseBranch:
    pattern: Pattern
    body: "ProofTerm"


@dataclass(frozen=True)
class Rec:
    name: str
    formula: Formula
    body: "ProofTerm"


@dataclass(frozen=True)
class AllIntro:
    ctx: Context
    body: "ProofTerm"


@dataclass(frozen=True)
class Let:
    name: str
    assumption: str
    subst: Substitution
    body: "ProofTerm"


@dataclass(frozen=True)
class Split:
    assumption: str
    ctx: Context
    body: "ProofTerm"


@dataclass(frozen=True)
class Witness:
    subst: Substitution


@dataclass(frozen=True)
class Case:
    var: str
    branches: Tuple[CaseBranch, ...]


ProofTerm = Union[Rec, AllIntro, Let, Split, Witness, Case]


@dataclass(frozen=True)
class Sequent:
    ctx: Context
    assumptions: Tuple[Tuple[str, Formula], ...]
    goal: Formula
    proof: Optional[ProofTerm] = None


def family_to_formula(mf) -> Formula:
    """∀Γ^I.∃(Γ^O, D : a Γ^I Γ^O).⊤"""
    name = "D"
    taken = set(mf.names)
    i = 0
    while name in taken:
        i += 1
        name = f"D{i}" if f"D{i}" not in taken else f"D_{i}"
    return Formula(mf.inputs, mf.outputs.extend(name, mf.identity_atom()))


# ---------------------------------------------------------------------------
# 改名与代换
# ---------------------------------------------------------------------------

def eta_var(name: str, ty: Term) -> Obj:
    return eta_expand(FVar(name), ty)


def subst_formula(f: Formula, theta: Dict[str, Obj], supply: NameSupply, strict: bool = False) -> Formula:
    """
    F[θ]。会被 θ 的值捕获的绑定变量：strict 时报 ScopeError，否则换成新名字。
    """
    relevant = {v: theta[v] for v in f.free_vars() if v in theta}
    if not relevant:
        return f
    captured = set()
    for m in relevant.values():
        captured.update(free_vars(m))
    mapping: Dict[str, Obj] = dict(relevant)
    out: List[Tuple[str, Term]] = []
    for n, a in f.binders():
        a2 = subst_fvars(a, mapping)
        if n in captured:
            if strict:
                raise ScopeError("scope", f"binder {n} of the goal formula would capture a variable")
            n2 = supply.fresh(n)
            mapping[n] = eta_var(n2, a2)
            out.append((n2, a2))
        else:
            mapping.pop(n, None)
            out.append((n, a2))
    k = len(f.forall)
    return Formula(Context(tuple(out[:k])), Context(tuple(out[k:])))


def alpha_context(recorded: Context, expected: Context, rule: str) -> Dict[str, Obj]:
    """recorded 必须逐位是 expected 的 α 变体；返回 expected 名字到 recorded 变量的代换。"""
    if len(recorded) != len(expected):
        raise ScopeError(rule, f"context {recorded} does not match {expected}")
    rho: Dict[str, Obj] = {}
    for (rn, ra), (en, ea) in zip(recorded, expected):
        want = subst_fvars(ea, rho)
        if ra != want:
            raise ScopeError(rule, f"{rn} : {show(ra)} does not match {en} : {show(want)}")
        rho[en] = eta_var(rn, ra)
    return rho


def formula_alpha_equal(f: Formula, g: Formula) -> bool:
    try:
        alpha_context(Context(tuple(f.binders())), Context(tuple(g.binders())), "alpha")
    except ScopeError:
        return False
    return len(f.forall) == len(g.forall)


_SUFFIX = re.compile(r"_(\d+)$")


def _proof_names(p: ProofTerm) -> Iterator[str]:
    def ctx_names(ctx: Context) -> Iterator[str]:
        for n, a in ctx:
            yield n
            yield from free_vars(a)

    if isinstance(p, Rec):
        yield p.name
        yield from ctx_names(Context(tuple(p.formula.binders())))
        yield from _proof_names(p.body)
    elif isinstance(p, AllIntro):
        yield from ctx_names(p.ctx)
        yield from _proof_names(p.body)
    elif isinstance(p, Let):
        yield p.name
        for n, m in p.subst.bindings:
            yield n
            yield from free_vars(m)
        yield from _proof_names(p.body)
    elif isinstance(p, Split):
        yield from ctx_names(p.ctx)
        yield from _proof_names(p.body)
    elif isinstance(p, Witness):
        for n, m in p.subst.bindings:
            yield from free_vars(m)
    elif isinstance(p, Case):
        yield p.var
        for br in p.branches:
            yield from ctx_names(br.pattern.ctx1)
            yield from ctx_names(br.pattern.ctx2)
            yield from _proof_names(br.body)


def supply_above(*items) -> NameSupply:
    """新名字的编号从证明与上下文中已出现的最大后缀之后开始。"""
    top = 0
    for item in items:
        names = _proof_names(item) if not isinstance(item, (Context, Formula)) else (
            n for pair in (item.binders() if isinstance(item, Formula) else item.entries)
            for n in [pair[0], *free_vars(pair[1])])
        for n in names:
            m = _SUFFIX.search(n)
            if m:
                top = max(top, int(m.group(1)))
    return NameSupply(top)


# ---------------------------------------------------------------------------
# case 规则：重新计算分裂并与记录的模式比较
# ---------------------------------------------------------------------------

def branch_renaming(cs: CaseSplit, pat: Pattern) -> Dict[str, Obj]:
    """计算得到的 (Γ′, Γ2[σ], c Γ_c[σ]) 与记录的模式只能相差一个改名 ρ。"""
    try:
        m = match(cs.term, pat.term, cs.new_context)
    except UnificationUndecided as e:
        raise CaseMguMismatch("case", f"{cs.const}: {e.detail}") from e
    if m is None:
        raise CaseMguMismatch("case", f"{cs.const}: pattern {show(pat.term)} is not {show(cs.term)}")
    recorded = pat.ctx1.names()
    rho: Dict[str, str] = {}
    for n, val in m.bindings:
        v = as_free_var(val)
        if v is None or v not in recorded or v in rho.values():
            raise CaseMguMismatch("case", f"{cs.const}: {show(val)}/{n} is not a renaming")
        rho[n] = v
    left = [n for n in cs.new_context.names() if n not in rho]
    right = [n for n in recorded if n not in rho.values()]
    if len(left) != len(right) or len(cs.new_context) != len(pat.ctx1):
        raise CaseMguMismatch("case", f"{cs.const}: context {pat.ctx1} does not match {cs.new_context}")
    rho.update(zip(left, right))
    ren = {n: eta_var(r, pat.ctx1.lookup(r)) for n, r in rho.items()}
    for n, a in cs.new_context:
        if pat.ctx1.lookup(rho[n]) != subst_fvars(a, ren):
            raise CaseMguMismatch("case", f"{cs.const}: type of {rho[n]} differs from {show(subst_fvars(a, ren))}")
    expected_rest = Context(tuple((n, subst_fvars(a, ren)) for n, a in cs.rest))
    if expected_rest != pat.ctx2:
        raise CaseMguMismatch("case", f"{cs.const}: context {pat.ctx2} does not match {expected_rest}")
    return ren


def _case_splits(ctx: Context, x: str, sig: Signature, supply: NameSupply) -> List[CaseSplit]:
    a_x = ctx.lookup(x)
    if a_x is None:
        raise ScopeError("case", f"{x} is not in the context")
    out = []
    for decl in sig.objects():
        cs = split_on(ctx, x, decl, sig, supply)
        if isinstance(cs.outcome, NoSolution):
            continue
        if not isinstance(cs.outcome, Mgu):
            raise UnificationUndecided("case", f"{x} against {decl.name}: {cs.outcome.reason}")
        out.append(cs)
    return out


def pattern_head(pat: Pattern) -> Optional[str]:
    t = pat.term
    if isinstance(t, Root) and not isinstance(t.head, FVar):
        return getattr(t.head, "name", None)
    return None


def case_branches(ctx: Context, case: Case, sig: Signature,
                  supply: NameSupply) -> List[Tuple[CaseBranch, CaseSplit, Dict[str, Obj]]]:
    """对签名中每个常量：无解则不得有分支，有 mgu 则恰有一个分支。"""
    splits = _case_splits(ctx, case.var, sig, supply)
    by_head: Dict[str, List[CaseBranch]] = {}
    for br in case.branches:
        by_head.setdefault(pattern_head(br.pattern) or "", []).append(br)
    wanted = {cs.const for cs in splits}
    for head in by_head:
        if head not in wanted:
            raise CaseMguMismatch("case", f"branch for {head or '?'} has no unifiable constant")
    out = []
    for cs in splits:
        found = by_head.get(cs.const, [])
        if len(found) != 1:
            raise CaseNotExhaustive("case", f"case on {case.var}: expected one branch for {cs.const}, found {len(found)}")
        ren = branch_renaming(cs, found[0].pattern)
        out.append((found[0], cs, ren))
    return out


def branch_theta(cs: CaseSplit, ren: Dict[str, Obj], x: str) -> Dict[str, Obj]:
    theta = {n: subst_fvars(cs.subst.get(n), ren) for n in cs.before.names() if n in cs.subst}
    theta[x] = subst_fvars(cs.term, ren)
    return theta


# ---------------------------------------------------------------------------
# 证明检查
# ---------------------------------------------------------------------------

class _Checker:
    def __init__(self, sig: Signature, order: Optional[TerminationOrder], supply: NameSupply):
        self.sig = sig
        self.order = order
        self.supply = supply

    def fresh_names(self, ctx: Context, names: Sequence[str], rule: str) -> None:
        seen = set(ctx.names())
        for n in names:
            if n in seen:
                raise ScopeError(rule, f"{n} is already bound")
            seen.add(n)

    def check(self, ctx: Context, delta: Dict[str, Formula], goal: Formula, p: ProofTerm) -> None:
        if isinstance(p, Rec):
            if not formula_alpha_equal(p.formula, goal):
                raise ProofCheckError("rec", f"formula {p.formula} is not the goal {goal}")
            if p.name in delta:
                raise ScopeError("rec", f"assumption {p.name} is already bound")
            if self.order is None:
                raise NonTerminatingRec("rec", f"no termination order for {p.name}")
            self.check(ctx, {**delta, p.name: goal}, goal, p.body)
            if not proofterm_terminates(p.body, p.name, self.order, self.sig, goal, ctx):
                raise NonTerminatingRec("rec", f"{p.name} does not decrease in {self.order}")
        elif isinstance(p, AllIntro):
            if not goal.forall:
                raise ProofCheckError("allR", "goal has no universal quantifier")
            self.fresh_names(ctx, p.ctx.names(), "allR")
            rho = alpha_context(p.ctx, goal.forall, "allR")
            rest = subst_formula(Formula(Context(), goal.exists), rho, self.supply, strict=True)
            self.check(ctx.concat(p.ctx), delta, rest, p.body)
        elif isinstance(p, Let):
            f = delta.get(p.assumption)
            if f is None:
                raise ScopeError("allL", f"unknown assumption {p.assumption}")
            if p.name in delta:
                raise ScopeError("allL", f"assumption {p.name} is already bound")
            if p.subst.names() != f.forall.names():
                raise ScopeError("allL", f"substitution {p.subst} does not instantiate {f.forall}")
            try:
                check_subst_typing(ctx, self.sig, p.subst, f.forall)
            except IllTyped as e:
                raise ProofCheckError("allL", e.detail) from e
            inst = subst_formula(Formula(Context(), f.exists), p.subst.as_dict(), self.supply)
            self.check(ctx, {**delta, p.name: inst}, goal, p.body)
        elif isinstance(p, Split):
            f = delta.get(p.assumption)
            if f is None:
                raise ScopeError("existsL", f"unknown assumption {p.assumption}")
            if f.forall:
                raise ProofCheckError("existsL", f"{p.assumption} is universally quantified")
            self.fresh_names(ctx, p.ctx.names(), "existsL")
            alpha_context(p.ctx, f.exists, "existsL")
            self.check(ctx.concat(p.ctx), delta, goal, p.body)
        elif isinstance(p, Witness):
            if goal.forall:
                raise ProofCheckError("existsR", "goal still has a universal quantifier")
            if p.subst.names() != goal.exists.names():
                raise ScopeError("existsR", f"witness {p.subst} does not cover {goal.exists}")
            try:
                check_subst_typing(ctx, self.sig, p.subst, goal.exists)
            except IllTyped as e:
                raise ProofCheckError("existsR", e.detail) from e
        elif isinstance(p, Case):
            for br, cs, ren in case_branches(ctx, p, self.sig, self.supply):
                pat = br.pattern
                self.fresh_names(Context(), pat.ctx1.names() + pat.ctx2.names(), "case")
                theta = branch_theta(cs, ren, p.var)
                sub_delta = {n: subst_formula(f, theta, self.supply) for n, f in delta.items()}
                sub_goal = subst_formula(goal, theta, self.supply, strict=True)
                self.check(pat.ctx1.concat(pat.ctx2), sub_delta, sub_goal, br.body)
        else:
            raise ProofCheckError("proof", f"unknown proof term {p!r}")



def check_proof(s: Sequent, sig: Signature, order: Optional[TerminationOrder] = None) -> None:
    if s.proof is None:
        raise ProofCheckError("proof", "sequent has no proof term")
    supply = supply_above(s.proof, s.ctx, s.goal)
    _Checker(sig, order, supply).check(s.ctx, dict(s.assumptions), s.goal, s.proof)
    logger.debug(f"proof of {s.goal} checked")


# ---------------------------------------------------------------------------
# 递归的终止条件
# ---------------------------------------------------------------------------

def proofterm_terminates(p: ProofTerm, rec_var: str, order: TerminationOrder,
                         sig: Optional[Signature] = None, formula: Optional[Formula] = None,
                         ctx: Context = Context()) -> bool:
    """
    每次对 rec_var 的 Let 调用，其 ∀ 实参都必须在 order 下小于当前的 ∀ 变量值。
    当前值沿着 case 代换更新；给出 sig 时按签名重新计算分裂得到精确的 θ，
    否则只用模式项替换被分析的变量。
    """
    supply = supply_above(p, ctx)
    forall = formula.forall.names() if formula is not None else None

    def walk(t: ProofTerm, ctx: Context, current: Optional[Dict[str, Obj]]) -> bool:
        if isinstance(t, AllIntro):
            if current is None:
                names = forall if forall is not None else t.ctx.names()
                current = {n: eta_var(m, a) for n, (m, a) in zip(names, t.ctx.entries)}
            return walk(t.body, ctx.concat(t.ctx), current)
        if isinstance(t, Let):
            if t.assumption == rec_var:
                if current is None or not order_decreases(order, t.subst.as_dict(), current):
                    logger.debug(f"call {t.name} = {rec_var} {t.subst} does not decrease")
                    return False
            return walk(t.body, ctx, current)
        if isinstance(t, Split):
            return walk(t.body, ctx.concat(t.ctx), current)
        if isinstance(t, Witness):
            return True
        if isinstance(t, Rec):
            return walk(t.body, ctx, current)
        if isinstance(t, Case):
            if sig is not None and t.var in ctx:
                try:
                    triples = case_branches(ctx, t, sig, supply)
                except LFError:
                    return False
                for br, cs, ren in triples:
                    theta = branch_theta(cs, ren, t.var)
                    nxt = None if current is None else {k: subst_fvars(v, theta) for k, v in current.items()}
                    if not walk(br.body, br.pattern.ctx1.concat(br.pattern.ctx2), nxt):
                        return False
                return True
            for br in t.branches:
                theta = {t.var: br.pattern.term}
                nxt = None if current is None else {k: subst_fvars(v, theta) for k, v in current.items()}
                if not walk(br.body, br.pattern.ctx1.concat(br.pattern.ctx2), nxt):
                    return False
            return True
        return False

    return walk(p, ctx, None)


# ---------------------------------------------------------------------------
# 执行
# ---------------------------------------------------------------------------

@dataclass
class _Closure:
    body: ProofTerm
    formula: Formula
    name: str


class _Executor:
    def __init__(self, sig: Signature, fuel: int):
        self.sig = sig
        self.fuel = fuel
        self.cases = 0
        self.calls = 0

    def tick(self) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise FuelExhausted("execute", "fuel exhausted")

    def call(self, rec: _Closure, args: List[Obj]) -> List[Obj]:
        self.calls += 1
        return self.run(rec.body, {}, {rec.name: rec}, rec.formula.exists.names(), args)

    def run(self, p: ProofTerm, env: Dict[str, Obj], delta: Dict[str, Union[_Closure, List[Obj]]],
            exists: List[str], pending: Optional[List[Obj]]) -> List[Obj]:
        while True:
            self.tick()
            if isinstance(p, Rec):
                delta = {**delta, p.name: _Closure(p.body, p.formula, p.name)}
                exists = p.formula.exists.names()
                p = p.body
            elif isinstance(p, AllIntro):
                if pending is None or len(pending) != len(p.ctx):
                    raise NoCaseMatches("execute", "universal introduction without matching inputs")
                env = {**env, **dict(zip(p.ctx.names(), pending))}
                pending = None
                p = p.body
            elif isinstance(p, Let):
                target = delta.get(p.assumption)
                if not isinstance(target, _Closure):
                    raise NoCaseMatches("execute", f"{p.assumption} is not a recursive assumption")
                args = [subst_fvars(m, env) for _, m in p.subst.bindings]
                delta = {**delta, p.name: self.call(target, args)}
                p = p.body
            elif isinstance(p, Split):
                values = delta.get(p.assumption)
                if not isinstance(values, list):
                    raise NoCaseMatches("execute", f"{p.assumption} has no computed witnesses")
                env = {**env, **dict(zip(p.ctx.names(), values))}
                p = p.body
            elif isinstance(p, Witness):
                return [subst_fvars(p.subst.get(n), env) for n in exists]
            elif isinstance(p, Case):
                self.cases += 1
                env, p = self.select(p, env)
            else:
                raise NoCaseMatches("execute", f"unknown proof term {p!r}")

    def select(self, case: Case, env: Dict[str, Obj]) -> Tuple[Dict[str, Obj], ProofTerm]:
        value = env.get(case.var)
        if value is None:
            raise NoCaseMatches("execute", f"{case.var} has no value")
        for br in case.branches:
            pat = br.pattern
            try:
                m = match(pat.term, value, pat.ctx1)
            except UnificationUndecided:
                continue
            if m is None:
                continue
            bound = dict(m.bindings)
            for n, a in pat.ctx1:
                if n not in bound and n in env:
                    bound[n] = env[n]
            self._infer_by_types(pat, bound, env)
            missing = [n for n in pat.ctx1.names() if n not in bound]
            if missing:
                raise NoCaseMatches("execute", f"cannot determine {missing[0]} in the {pattern_head(pat)} case")
            return {**env, **bound}, br.body
        raise NoCaseMatches("execute", f"no case matches {show(value)}")

    def _infer_by_types(self, pat: Pattern, bound: Dict[str, Obj], env: Dict[str, Obj]) -> None:
        progress = True
        while progress:
            progress = False
            for n, a in pat.ctx1:
                missing = [v for v in free_vars(a) if v in pat.ctx1 and v not in bound]
                if n not in bound or not missing:
                    continue
                try:
                    _, have = synthesize(bound[n], Context(), self.sig)
                except LFError:
                    continue
                known = {k: v for k, v in bound.items()}
                m = match(subst_fvars(a, known), have, missing)
                if m is not None:
                    bound.update(m.bindings)
                    progress = True


def execute(p: ProofTerm, inputs: Substitution, sig: Signature, fuel: int = DEFAULT_FUEL,
            formula: Optional[Formula] = None) -> Substitution:
    """把已检查的证明当作全函数运行：闭合输入 σ1 得到闭合输出 σ2。"""
    if formula is None:
        if not isinstance(p, Rec):
            formula = Formula(inputs.domain or Context(), Context())
        else:
            formula = p.formula
    ex = _Executor(sig, fuel)
    args = [inputs.get(n) for n in formula.forall.names()]
    if any(a is None for a in args):
        raise NoCaseMatches("execute", f"inputs {inputs} do not cover {formula.forall}")
    pending = args if formula.forall else None
    values = ex.run(p, {}, {}, formula.exists.names(), pending)
    logger.debug(f"executed with {ex.cases} case selections and {ex.calls} recursive calls")
    return Substitution(tuple(zip(formula.exists.names(), values)), formula.exists)
