"""
LP Engine module.

This module is part of the LF Totality Checker project.
"""

# lp_engine.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterator, List, Optional, Tuple

from errors import BudgetExhausted, UnificationUndecided
from lf_core import Context, Signature, Substitution
from terms import (
    Atom, Const, FVar, Lam, Pi, Root, Term, Fam, Obj,
    abstract, bvar_occurs, eta_expand, free_vars, open_var, show, subst_fvars,
)
from unify import Mgu, NameSupply, NoSolution, UnifProblem, unify

logger = logging.getLogger(__name__)

DEFAULT_DEPTH = 10_000


@dataclass(frozen=True)
class Clause:
    """c : ΠΓ_c. A_m → … → A_1 → A；premises 按求解顺序排列（A_1 在前）。"""
    const: str
    params: Context
    premises: Tuple[Tuple[str, Fam], ...]
    head: Atom
    binders: Tuple[Tuple[str, Fam, bool], ...]

    @property
    def family(self) -> str:
        return self.head.const

    def rebuild(self) -> Fam:
        """重新组装 ΠΓ_c. A_m → … → A_1 → A。"""
        ty: Term = self.head
        for name, fam, _ in reversed(self.binders):
            ty = Pi(name, fam, abstract(ty, name))
        return ty


@dataclass(frozen=True)
class Goal:
    target: Fam
    context: Context = Context()
    depth: int = DEFAULT_DEPTH
    name: str = "D"


def open_prefix(ty: Fam, namer: Callable[[str, bool, int], str]) -> Tuple[List[Tuple[str, Fam, bool]], Fam]:
    """逐个打开 Π 前缀；不被后续引用的绑定视为前提。"""
    binders: List[Tuple[str, Fam, bool]] = []
    t: Term = ty
    while isinstance(t, Pi):
        premise = not bvar_occurs(t.body)
        name = namer(t.hint, premise, len(binders))
        binders.append((name, t.domain, premise))
        t = open_var(t.body, name)
    return binders, t


def target_family(ty: Term) -> Optional[str]:
    while isinstance(ty, Pi):
        ty = ty.body
    return ty.const if isinstance(ty, Atom) else None


def decompose(const: str, ty: Fam) -> Clause:
    used: Dict[str, int] = {}
    count = [0]

    def namer(hint: str, premise: bool, index: int) -> str:
        if premise:
            count[0] += 1
            base = hint if hint and hint != "_" else "D"
        else:
            base = hint if hint and hint != "_" else "X"
        base = base.lstrip("#") or "X"
        if base not in used:
            used[base] = 1
            return base
        used[base] += 1
        cand = f"{base}{used[base]}"
        while cand in used:
            used[base] += 1
            cand = f"{base}{used[base]}"
        used[cand] = 1
        return cand

    binders, head = open_prefix(ty, namer)
    params = Context(tuple((n, a) for n, a, p in binders if not p))
    premises = tuple((n, a) for n, a, p in reversed(binders) if p)
    return Clause(const, params, premises, head, tuple(binders))


def clauses_for(sig: Signature, a: str) -> List[Clause]:
    return [decompose(d.name, d.classifier) for d in sig.objects() if target_family(d.classifier) == a]


# ---------------------------------------------------------------------------
# 反向链接求解
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _State:
    evars: Context
    sol: Tuple[Tuple[str, Obj], ...]
    forbidden: Tuple[Tuple[str, FrozenSet[str]], ...]

    def solution(self) -> Dict[str, Obj]:
        return dict(self.sol)


class LogicEngine:
    """深度优先、签名顺序、前提从左到右的证明搜索。"""

    def __init__(self, sig: Signature, depth: int = DEFAULT_DEPTH, supply: Optional[NameSupply] = None):
        self.sig = sig
        self.depth = depth
        self.supply = supply if supply is not None else NameSupply()
        self.steps = 0
        self._clauses: Dict[str, List[Tuple[str, Fam]]] = {}

    def candidates(self, family: str) -> List[Tuple[str, Fam]]:
        if family not in self._clauses:
            self._clauses[family] = [(d.name, d.classifier) for d in self.sig.objects()
                                     if target_family(d.classifier) == family]
        return self._clauses[family]

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.depth:
            raise BudgetExhausted("solve", f"more than {self.depth} backchaining steps")

    def solve(self, goal: Goal) -> Iterator[Tuple[Obj, Substitution, Context]]:
        self.depth = goal.depth
        self.steps = 0
        state = _State(goal.context, (), ())
        logical = goal.context.names()
        for proof, st in self._solve(goal.target, state, Context()):
            sol = st.solution()
            answer = Substitution(tuple((v, sol[v]) for v in logical if v in sol))
            residual = Context(tuple((n, subst_fvars(a, sol)) for n, a in st.evars if n not in sol))
            logger.debug(f"solution after {self.steps} steps: {show(proof)}")
            yield subst_fvars(proof, sol), answer, residual

    def _solve(self, target: Fam, state: _State, params: Context) -> Iterator[Tuple[Obj, _State]]:
        target = subst_fvars(target, state.solution())
        if isinstance(target, Pi):
            yield from self._hypothetical(target, state, params)
            return
        if not isinstance(target, Atom):
            raise UnificationUndecided("solve", f"goal {show(target)} is not atomic")
        local = [(n, a) for n, a in reversed(params.entries) if target_family(a) == target.const]
        for name, ty in local:
            yield from self._backchain(FVar(name), ty, target, state, params)
        for name, ty in self.candidates(target.const):
            yield from self._backchain(Const(name), ty, target, state, params)

    def _hypothetical(self, target: Pi, state: _State, params: Context) -> Iterator[Tuple[Obj, _State]]:
        p = self.supply.fresh(target.hint if target.hint not in ("_", "") else "p")
        forbidden = dict(state.forbidden)
        for v in state.evars.names():
            forbidden[v] = forbidden.get(v, frozenset()) | {p}
        inner = _State(state.evars, state.sol, tuple(forbidden.items()))
        body = open_var(target.body, p)
        for proof, st in self._solve(body, inner, params.extend(p, target.domain)):
            yield Lam(target.hint, abstract(proof, p), target.domain), st

    def _backchain(self, head, ty: Fam, target: Atom, state: _State,
                   params: Context) -> Iterator[Tuple[Obj, _State]]:
        self.tick()
        binders, clause_head = open_prefix(ty, lambda hint, premise, i: self.supply.fresh(
            hint if hint not in ("_", "") else ("D" if premise else "X")))
        fresh = [(n, a) for n, a, p in binders if not p]
        evars = state.evars.concat(fresh)
        # 新引入的逻辑变量可以依赖当前所有参数
        st = self._unify(clause_head, target, evars, state, params)
        if st is None:
            return
        premises = [(n, a) for n, a, p in reversed(binders) if p]
        logger.debug(f"backchain {show(Root(head))} on {show(target)}")
        for proofs, final in self._solve_premises(premises, st, params):
            args = []
            sol = final.solution()
            for n, a, p in binders:
                if p:
                    args.append(proofs[n])
                else:
                    args.append(eta_expand(FVar(n), subst_fvars(a, sol)))
            yield Root(head, tuple(args)), final

    def _solve_premises(self, premises, state: _State, params: Context):
        if not premises:
            yield {}, state
            return
        (name, fam), rest = premises[0], premises[1:]
        for proof, st in self._solve(fam, state, params):
            for proofs, final in self._solve_premises(rest, st, params):
                yield {name: proof, **proofs}, final

    def _unify(self, lhs: Atom, rhs: Atom, evars: Context, state: _State,
               params: Context) -> Optional[_State]:
        sol = state.solution()
        lhs, rhs = subst_fvars(lhs, sol), subst_fvars(rhs, sol)
        open_vars = [n for n in evars.names() if n not in sol]
        ctx = params.concat((n, subst_fvars(a, sol)) for n, a in evars if n not in sol)
        problem = UnifProblem(((lhs, rhs),), ctx, tuple(open_vars), self.sig, state.forbidden)
        outcome = unify(problem, self.supply)
        if isinstance(outcome, NoSolution):
            return None
        if not isinstance(outcome, Mgu):
            raise UnificationUndecided("solve", f"{show(lhs)} = {show(rhs)}: {outcome.reason}")
        theta = outcome.subst.as_dict()
        new_sol = {k: subst_fvars(m, theta) for k, m in sol.items()}
        new_sol.update(theta)
        forbidden = dict(state.forbidden)
        for v, m in theta.items():
            for w in free_vars(m):
                if w not in forbidden and v in forbidden:
                    forbidden[w] = forbidden[v]
        known = {n for n, _ in evars}
        new_evars = evars.concat((n, a) for n, a in outcome.context if n not in known)
        return _State(new_evars, tuple(new_sol.items()), tuple(forbidden.items()))


def solve(g: Goal, sig: Signature, supply: Optional[NameSupply] = None) -> Iterator[Tuple[Obj, Substitution]]:
    engine = LogicEngine(sig, g.depth, supply)
    for proof, answer, _ in engine.solve(g):
        yield proof, answer
