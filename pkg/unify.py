"""
Unify module.

This module is part of the LF Totality Checker project.
"""

# unify.py
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

from errors import FunctionTypeSplit, UnificationUndecided
from lf_core import Context, Decl, Signature, Substitution, apply_subst, dependency_closure
from terms import (
    Atom, BVar, Const, FamLam, FVar, Lam, Pi, Root, Term, Type, Fam, Obj,
    abstract, eta_expand, fresh_local, free_vars, local_hint, open_var, show, subst_fvars,
)

logger = logging.getLogger(__name__)


class NameSupply:
    """显式传递的计数器，保证生成的名字可复现。"""

    _suffix = re.compile(r"_\d+$")

    def __init__(self, start: int = 0):
        self.counter = start

    def fresh(self, hint: str = "X") -> str:
        self.counter += 1
        base = self._suffix.sub("", hint.lstrip("#")) or "X"
        if base == "_":
            base = "X"
        base = re.sub(r"\d+$", "", base) or base
        return f"{base}_{self.counter}"


# ---------------------------------------------------------------------------
# 问题与结果
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnifProblem:
    equations: Tuple[Tuple[Term, Term], ...]
    context: Context
    freevars: Tuple[str, ...]
    signature: Optional[Signature] = None
    # evar -> 不允许依赖的刚性变量（局部假设引入的参数）
    forbidden: Tuple[Tuple[str, FrozenSet[str]], ...] = ()


@dataclass(frozen=True)
class Mgu:
    subst: Substitution
    context: Context


@dataclass(frozen=True)
class NoSolution:
    reason: str = ""


@dataclass(frozen=True)
class OutsideFragment:
    reason: str = ""


UnifOutcome = Union[Mgu, NoSolution, OutsideFragment]


class _Clash(Exception):
    pass


class _Undecided(Exception):
    pass


class _NeedsPrune(Exception):
    def __init__(self, evar: str, args: Tuple[str, ...], drop: Set[str]):
        self.evar = evar
        self.args = args
        self.drop = drop


# ---------------------------------------------------------------------------
# 严格性
# ---------------------------------------------------------------------------

def as_bound_var(m: Obj, depth: int = 0) -> Optional[int]:
    """若 m 是 η-展开后的约束变量，返回其（相对外层的）de Bruijn 索引。"""
    n = 0
    while isinstance(m, Lam):
        m = m.body
        n += 1
    if not isinstance(m, Root) or not isinstance(m.head, BVar):
        return None
    if len(m.spine) != n:
        return None
    for i, a in enumerate(m.spine):
        if as_bound_var(a) != n - 1 - i:
            return None
    if m.head.index < n:
        return None
    return m.head.index - n


def as_free_var(m: Obj) -> Optional[str]:
    """若 m 是 η-展开后的自由变量，返回其名字。"""
    n = 0
    while isinstance(m, Lam):
        m = m.body
        n += 1
    if not isinstance(m, Root) or not isinstance(m.head, FVar):
        return None
    if len(m.spine) != n:
        return None
    for i, a in enumerate(m.spine):
        if as_bound_var(a) != n - 1 - i:
            return None
    return m.head.name


def strict_occurrence_exists(t: Term, v: str) -> bool:
    if isinstance(t, Root):
        if isinstance(t.head, FVar):
            if t.head.name != v:
                return False
            idx = [as_bound_var(a) for a in t.spine]
            return all(i is not None for i in idx) and len(set(idx)) == len(idx)
        return any(strict_occurrence_exists(a, v) for a in t.spine)
    if isinstance(t, Lam):
        return strict_occurrence_exists(t.body, v)
    if isinstance(t, Atom):
        return any(strict_occurrence_exists(a, v) for a in t.spine)
    if isinstance(t, (Pi, FamLam)):
        return strict_occurrence_exists(t.domain, v) or strict_occurrence_exists(t.body, v)
    return False


def is_strict_term(t: Term, freevars: Iterable[str]) -> bool:
    return all(strict_occurrence_exists(t, v) for v in freevars)


# ---------------------------------------------------------------------------
# 合一
# ---------------------------------------------------------------------------

class _Unifier:
    def __init__(self, problem: UnifProblem, supply: NameSupply):
        self.ctx = problem.context
        self.supply = supply
        self.original = list(problem.freevars)
        self.evars: Dict[str, Optional[Fam]] = {v: problem.context.lookup(v) for v in problem.freevars}
        self.forbidden: Dict[str, FrozenSet[str]] = dict(problem.forbidden)
        self.sol: Dict[str, Obj] = {}
        self.locals: Set[str] = set()

    # -- helpers ---------------------------------------------------------

    def is_evar(self, name: str) -> bool:
        return name in self.evars and name not in self.sol

    def evar_type(self, name: str) -> Fam:
        ty = self.evars.get(name)
        if ty is None:
            raise _Undecided(f"no classifier for {name}")
        return subst_fvars(ty, self.sol)

    def rank(self, name: str) -> int:
        return list(self.evars).index(name)

    def allowed_arg(self, evar: str, name: str) -> bool:
        return name in self.locals or name in self.forbidden.get(evar, frozenset())

    def pattern_args(self, evar: str, spine: Sequence[Obj]) -> Optional[Tuple[str, ...]]:
        names = []
        for a in spine:
            n = as_free_var(a)
            if n is None or not self.allowed_arg(evar, n) or n in names:
                return None
            names.append(n)
        return tuple(names)

    def bind(self, name: str, value: Obj) -> None:
        value = subst_fvars(value, self.sol)
        logger.debug(f"bind {name} := {show(value)}")
        restricted = self.forbidden.get(name, frozenset())
        if restricted:
            for v in free_vars(value):
                if self.is_evar(v):
                    self.forbidden[v] = self.forbidden.get(v, frozenset()) | restricted
        self.sol = {k: subst_fvars(m, {name: value}) for k, m in self.sol.items()}
        self.sol[name] = value

    def new_evar(self, hint: str, ty: Fam, like: str) -> str:
        n = self.supply.fresh(hint)
        self.evars[n] = ty
        if like in self.forbidden:
            self.forbidden[n] = self.forbidden[like]
        return n

    def instantiated_prefix(self, evar: str, args: Tuple[str, ...]) -> Tuple[List[Tuple[str, Fam]], Fam]:
        """F : Πy1:B1..Πyn:Bn.P 按实参 x̄ 实例化，得到 (x_i, B_i[x̄]) 与 P[x̄]。"""
        ty: Term = self.evar_type(evar)
        out = []
        for a in args:
            if not isinstance(ty, Pi):
                raise _Undecided(f"{evar} applied to too many arguments")
            out.append((a, ty.domain))
            ty = subst_fvars(open_var(ty.body, "#arg"), {"#arg": Root(FVar(a))})
        return out, ty

    def restricted_evar(self, evar: str, args: Tuple[str, ...], keep: Sequence[str], hint: str) -> Tuple[str, Obj]:
        """构造新变量 H : Π(keep).P 以及 λx̄. H keep。"""
        prefix, target = self.instantiated_prefix(evar, args)
        dropped = set(args) - set(keep)
        types = dict(prefix)
        for k in keep:
            if dropped & set(free_vars(types[k])):
                raise _Undecided(f"argument {k} of {evar} depends on a pruned argument")
        if dropped & set(free_vars(target)):
            raise _Undecided(f"classifier of {evar} depends on a pruned argument")
        ty: Term = target
        for k in reversed(keep):
            ty = Pi(local_hint(k), types[k], abstract(ty, k))
        h = self.new_evar(hint, ty, evar)
        body: Obj = Root(FVar(h), tuple(eta_expand(FVar(k), types[k]) for k in keep))
        return h, self.lambdas(body, args, types)

    @staticmethod
    def lambdas(body: Obj, args: Sequence[str], types: Dict[str, Fam]) -> Obj:
        for a in reversed(args):
            body = Lam(local_hint(a), abstract(body, a), types.get(a))
        return body

    # -- main loop -------------------------------------------------------

    def run(self, equations: Sequence[Tuple[Term, Term]]) -> UnifOutcome:
        pending: List[Tuple[Term, Term]] = list(equations)
        try:
            while pending:
                stuck: List[Tuple[Term, Term]] = []
                progressed = self.drain(pending, stuck)
                if stuck and not progressed:
                    raise _Undecided("equation outside the pattern fragment: "
                                     + " = ".join(show(t) for t in stuck[0]))
                pending = stuck
        except _Clash as e:
            return NoSolution(str(e))
        except _Undecided as e:
            return OutsideFragment(str(e))
        return self.result()

    def drain(self, work: List[Tuple[Term, Term]], stuck: List[Tuple[Term, Term]]) -> bool:
        progressed = False
        while work:
            lhs, rhs = work.pop(0)
            lhs, rhs = subst_fvars(lhs, self.sol), subst_fvars(rhs, self.sol)
            try:
                new = self.step(lhs, rhs)
            except _NeedsPrune as p:
                self.prune(p)
                work.insert(0, (lhs, rhs))
                progressed = True
                continue
            if new is None:
                stuck.append((lhs, rhs))
            else:
                work[0:0] = new
                progressed = True
        return progressed

    def step(self, lhs: Term, rhs: Term) -> Optional[List[Tuple[Term, Term]]]:
        """返回新的方程列表；None 表示暂时无法处理（非模式）。"""
        if lhs == rhs:
            return []
        if isinstance(lhs, Lam) or isinstance(rhs, Lam):
            x = fresh_local("u")
            self.locals.add(x)
            return [(self.open_eta(lhs, x), self.open_eta(rhs, x))]
        if isinstance(lhs, Atom) and isinstance(rhs, Atom):
            if lhs.const != rhs.const or len(lhs.spine) != len(rhs.spine):
                raise _Clash(f"{show(lhs)} against {show(rhs)}")
            return list(zip(lhs.spine, rhs.spine))
        if isinstance(lhs, Pi) and isinstance(rhs, Pi):
            x = fresh_local(lhs.hint)
            self.locals.add(x)
            return [(lhs.domain, rhs.domain), (open_var(lhs.body, x), open_var(rhs.body, x))]
        if isinstance(lhs, Type) and isinstance(rhs, Type):
            return []
        if not (isinstance(lhs, Root) and isinstance(rhs, Root)):
            raise _Clash(f"{show(lhs)} against {show(rhs)}")
        lflex = isinstance(lhs.head, FVar) and self.is_evar(lhs.head.name)
        rflex = isinstance(rhs.head, FVar) and self.is_evar(rhs.head.name)
        if lflex and rflex:
            return self.flex_flex(lhs, rhs)
        if lflex:
            return self.flex_rigid(lhs, rhs)
        if rflex:
            return self.flex_rigid(rhs, lhs)
        if lhs.head != rhs.head or len(lhs.spine) != len(rhs.spine):
            raise _Clash(f"{show(lhs)} against {show(rhs)}")
        return list(zip(lhs.spine, rhs.spine))

    @staticmethod
    def open_eta(t: Term, x: str) -> Term:
        if isinstance(t, Lam):
            return open_var(t.body, x)
        if isinstance(t, Root):
            return Root(t.head, t.spine + (Root(FVar(x)),))
        raise _Clash(f"{show(t)} is not a function")

    def flex_rigid(self, flex: Root, rigid: Root) -> Optional[List]:
        f = flex.head.name
        args = self.pattern_args(f, flex.spine)
        if args is None:
            return None
        value = self.invert(f, args, rigid)
        self.bind(f, value)
        return []

    def invert(self, f: str, args: Tuple[str, ...], t: Term) -> Obj:
        self.check_occurrences(f, args, t, rigid=True)
        try:
            types = dict(self.instantiated_prefix(f, args)[0])
        except _Undecided:
            types = {}
        return self.lambdas(t, args, types)

    def check_occurrences(self, f: str, args: Tuple[str, ...], t: Term, rigid: bool) -> None:
        allowed = set(args)
        banned = set(self.forbidden.get(f, frozenset()))
        if isinstance(t, Root):
            h = t.head
            if isinstance(h, FVar):
                if h.name == f:
                    if rigid:
                        raise _Clash(f"occurs check: {f}")
                    raise _Undecided(f"{f} occurs inside a flexible argument")
                if self.is_evar(h.name):
                    self.check_flex_arguments(f, args, h.name, t.spine)
                    return
                if (h.name in self.locals or h.name in banned) and h.name not in allowed:
                    if rigid:
                        raise _Clash(f"{h.name} escapes its scope in the solution for {f}")
                    raise _Undecided(f"{h.name} escapes its scope")
            for a in t.spine:
                self.check_occurrences(f, args, a, rigid)
        elif isinstance(t, Lam):
            x = fresh_local(t.hint)
            self.locals.add(x)
            inner = args + (x,)
            self.check_occurrences(f, inner, open_var(t.body, x), rigid)
        elif isinstance(t, Atom):
            for a in t.spine:
                self.check_occurrences(f, args, a, rigid)
        elif isinstance(t, (Pi, FamLam)):
            self.check_occurrences(f, args, t.domain, rigid)
            x = fresh_local(t.hint)
            self.locals.add(x)
            self.check_occurrences(f, args + (x,), open_var(t.body, x), rigid)

    def check_flex_arguments(self, f: str, args: Tuple[str, ...], g: str, spine: Sequence[Obj]) -> None:
        allowed = set(args)
        banned = set(self.forbidden.get(f, frozenset()))
        gargs = self.pattern_args(g, spine)
        if gargs is None:
            for a in spine:
                self.check_occurrences(f, args, a, rigid=False)
            return
        drop = {a for a in gargs
                if (a in self.locals or a in banned) and a not in allowed}
        if drop:
            raise _NeedsPrune(g, gargs, drop)

    def prune(self, p: _NeedsPrune) -> None:
        keep = [a for a in p.args if a not in p.drop]
        _, value = self.restricted_evar(p.evar, p.args, keep, p.evar)
        logger.debug(f"pruning {p.evar} at {sorted(p.drop)}")
        self.bind(p.evar, value)

    def flex_flex(self, lhs: Root, rhs: Root) -> Optional[List]:
        f, g = lhs.head.name, rhs.head.name
        fargs = self.pattern_args(f, lhs.spine)
        gargs = self.pattern_args(g, rhs.spine)
        if fargs is None or gargs is None:
            if fargs is not None and f != g:
                return self.flex_rigid(lhs, rhs)
            if gargs is not None and f != g:
                return self.flex_rigid(rhs, lhs)
            return None
        if f == g:
            if len(fargs) != len(gargs):
                raise _Clash(f"{f} applied inconsistently")
            keep = [a for a, b in zip(fargs, gargs) if a == b]
            if len(keep) == len(fargs):
                return []
            _, value = self.restricted_evar(f, fargs, keep, f)
            self.bind(f, value)
            return []
        if set(fargs) == set(gargs) and len(fargs) == len(gargs):
            # 较后引入的变量被绑定，较早的保持不变
            if self.rank(g) > self.rank(f):
                self.bind(g, self.invert(g, gargs, lhs))
            else:
                self.bind(f, self.invert(f, fargs, rhs))
            return []
        common = [a for a in fargs if a in gargs]
        h, fval = self.restricted_evar(f, fargs, common, f)
        self.bind(f, fval)
        gtypes = dict(self.instantiated_prefix(g, gargs)[0])
        body: Obj = Root(FVar(h), tuple(eta_expand(FVar(a), gtypes[a]) for a in common))
        self.bind(g, self.lambdas(body, gargs, gtypes))
        return []

    # -- result ----------------------------------------------------------

    def result(self) -> Mgu:
        subst = Substitution(tuple((v, self.sol[v]) for v in self.original if v in self.sol))
        remaining = [v for v in self.evars if v not in self.sol]
        typed = {v: subst_fvars(self.evars[v], self.sol) if self.evars[v] is not None else None
                 for v in remaining}
        ordered = stable_topological(remaining, typed)
        ctx = Context(tuple((v, typed[v]) for v in ordered if typed[v] is not None))
        return Mgu(subst, ctx)


def stable_topological(names: List[str], types: Dict[str, Optional[Fam]]) -> List[str]:
    pending = list(names)
    placed: List[str] = []
    deps = {n: {v for v in free_vars(types[n]) if v in types and v != n} if types[n] is not None else set()
            for n in names}
    while pending:
        for n in pending:
            if deps[n] <= set(placed):
                placed.append(n)
                pending.remove(n)
                break
        else:
            # 循环依赖不应出现；保持原顺序
            placed.extend(pending)
            break
    return placed


def unify(p: UnifProblem, supply: Optional[NameSupply] = None) -> UnifOutcome:
    supply = supply if supply is not None else NameSupply()
    outcome = _Unifier(p, supply).run(p.equations)
    logger.debug(f"unify {len(p.equations)} equation(s): {type(outcome).__name__}")
    return outcome


def match(pattern: Term, target: Term, freevars: Union[Context, Iterable[str]],
          supply: Optional[NameSupply] = None) -> Optional[Substitution]:
    """单侧合一：只有 pattern 的变量可以实例化。失败返回 None。"""
    if isinstance(freevars, Context):
        ctx = freevars
        names = freevars.names()
    else:
        names = list(freevars)
        ctx = Context()
    occurring = [v for v in names if v in free_vars(pattern)]
    if not is_strict_term(pattern, occurring):
        raise UnificationUndecided("match", f"pattern {show(pattern)} is not strict")
    clash = set(names) & set(free_vars(target))
    renaming = {v: f"#{v}" for v in clash}
    if renaming:
        pattern = subst_fvars(pattern, {v: Root(FVar(n)) for v, n in renaming.items()})
        ctx = Context(tuple((renaming.get(v, v), a) for v, a in ctx))
    inner = [renaming.get(v, v) for v in names]
    problem = UnifProblem(((pattern, target),), ctx, tuple(inner))
    outcome = unify(problem, supply)
    if isinstance(outcome, NoSolution):
        return None
    if isinstance(outcome, OutsideFragment):
        raise UnificationUndecided("match", outcome.reason)
    back = {n: v for v, n in renaming.items()}
    return Substitution(tuple((back.get(n, n), m) for n, m in outcome.subst.bindings))


def is_renaming(s: Substitution, targets: Optional[Iterable[str]] = None) -> bool:
    """每个值都是（η-展开的）不同变量。"""
    images = [as_free_var(m) for _, m in s.bindings]
    if any(i is None for i in images) or len(set(images)) != len(images):
        return False
    if targets is not None:
        allowed = set(targets)
        return all(i in allowed for i in images)
    return True


# ---------------------------------------------------------------------------
# 按签名常量分裂变量（覆盖检查与 M2 case 规则共用）
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseSplit:
    """对 x 与常量 c 求解 (A_x = A_c, x = c Γ_c) 的结果。"""
    const: str
    outcome: UnifOutcome
    before: Context
    after: Context
    params: Context = Context()
    subst: Optional[Substitution] = None
    new_context: Optional[Context] = None
    rest: Optional[Context] = None
    term: Optional[Obj] = None

    @property
    def child_context(self) -> Context:
        return self.new_context.concat(self.rest)


def case_permutation(ctx: Context, x: str) -> Tuple[Context, Fam, Context]:
    """把 Γ 重排为 Γ1, x:A_x, Γ2，其中 Γ1 是 A_x 的最小依赖闭包。"""
    a_x = ctx.lookup(x)
    if a_x is None:
        raise KeyError(x)
    before = dependency_closure(ctx, free_vars(a_x))
    after = ctx.without(before.names() + [x])
    return before, a_x, after


def open_constant(decl: Decl, supply: NameSupply) -> Tuple[Context, Fam, Obj]:
    """把 c : ΠΓ_c.A_c 的前缀换成新名字，返回 (Γ_c, A_c, c Γ_c)。"""
    entries = []
    ty: Term = decl.classifier
    while isinstance(ty, Pi):
        n = supply.fresh(ty.hint if ty.hint != "_" else "D")
        entries.append((n, ty.domain))
        ty = open_var(ty.body, n)
    gamma_c = Context(tuple(entries))
    term = Root(Const(decl.name), tuple(eta_expand(FVar(n), a) for n, a in entries))
    return gamma_c, ty, term


def split_on(ctx: Context, x: str, decl: Decl, sig: Signature, supply: NameSupply) -> CaseSplit:
    before, a_x, after = case_permutation(ctx, x)
    if not isinstance(a_x, Atom):
        raise FunctionTypeSplit("split", f"{x} : {show(a_x)} is not atomic")
    gamma_c, a_c, term = open_constant(decl, supply)
    problem_ctx = before.extend(x, a_x).concat(gamma_c)
    problem = UnifProblem(((a_x, a_c), (Root(FVar(x)), term)), problem_ctx,
                          tuple(problem_ctx.names()), sig)
    outcome = unify(problem, supply)
    if not isinstance(outcome, Mgu):
        return CaseSplit(decl.name, outcome, before, after, gamma_c)
    sigma = outcome.subst
    rest = after.map_types(sigma)
    return CaseSplit(decl.name, outcome, before, after, gamma_c, sigma, outcome.context,
                     rest, apply_subst(Root(FVar(x)), sigma))


def split_all(ctx: Context, x: str, sig: Signature, supply: NameSupply) -> List[CaseSplit]:
    return [split_on(ctx, x, d, sig, supply) for d in sig.objects()]
