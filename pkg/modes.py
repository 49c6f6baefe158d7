"""
Modes module.

This module is part of the LF Totality Checker project.
"""

# modes.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from errors import IllDefinedMode, ModeError, FreshnessError, ParseError
from lf_core import Context, Signature, Substitution, dependency_closure
from lp_engine import Clause
from terms import Atom, Const, FVar, Lam, Pi, Root, Term, TYPE, Fam, Obj, abstract, eta_expand, free_vars, open_var
from unify import strict_occurrence_exists

logger = logging.getLogger(__name__)

INPUT = "+"
OUTPUT = "-"


@dataclass(frozen=True)
class ModedFamily:
    """带极性标记的类型族 a : ΠΓ^I.ΠΓ^O.type。参数按原始声明顺序保存。"""
    family: str
    names: Tuple[str, ...]
    classifiers: Tuple[Fam, ...]
    polarities: Tuple[str, ...]
    implicit: Tuple[bool, ...]

    @cached_property
    def order(self) -> Tuple[int, ...]:
        ins = [i for i, p in enumerate(self.polarities) if p == INPUT]
        outs = [i for i, p in enumerate(self.polarities) if p == OUTPUT]
        return tuple(ins + outs)

    @cached_property
    def inputs(self) -> Context:
        return Context(tuple((self.names[i], self.classifiers[i])
                             for i, p in enumerate(self.polarities) if p == INPUT))

    @cached_property
    def outputs(self) -> Context:
        return Context(tuple((self.names[i], self.classifiers[i])
                             for i, p in enumerate(self.polarities) if p == OUTPUT))

    @property
    def explicit_names(self) -> List[str]:
        return [n for n, imp in zip(self.names, self.implicit) if not imp]

    def input_args(self, a: Atom) -> List[Obj]:
        return [a.spine[i] for i, p in enumerate(self.polarities) if p == INPUT]

    def output_args(self, a: Atom) -> List[Obj]:
        return [a.spine[i] for i, p in enumerate(self.polarities) if p == OUTPUT]

    def input_subst(self, a: Atom) -> Substitution:
        """σ^I = (M_1/x_1, …, M_k/x_k)。"""
        return Substitution(tuple(zip(self.inputs.names(), self.input_args(a))), self.inputs)

    def output_subst(self, a: Atom) -> Substitution:
        return Substitution(tuple(zip(self.outputs.names(), self.output_args(a))), self.outputs)

    def atom_of(self, values: Mapping[str, Obj]) -> Atom:
        """按原始参数顺序组装 a M_1 … M_n。"""
        return Atom(self.family, tuple(values[n] for n in self.names))

    def identity_atom(self) -> Atom:
        ctx = dict(zip(self.names, self.classifiers))
        return self.atom_of({n: eta_expand(FVar(n), ctx[n]) for n in self.names})

    def kind(self) -> Term:
        """重排后的 ΠΓ^I.ΠΓ^O.type。"""
        body: Term = TYPE
        for i in reversed(self.order):
            body = Pi(self.names[i], self.classifiers[i], abstract(body, self.names[i]))
        return body

    def describe(self) -> str:
        return " ".join(f"{p}{n}" for n, p in zip(self.names, self.polarities))


def _open_kind(kind: Term, names: Sequence[Optional[str]]) -> Tuple[List[str], List[Fam]]:
    used: Dict[str, int] = {}
    out_names: List[str] = []
    classifiers: List[Fam] = []
    reserved = {n for n in names if n}
    i = 0
    while isinstance(kind, Pi):
        name = names[i] if i < len(names) and names[i] else None
        if name is None:
            base = kind.hint.lstrip("#") if kind.hint not in ("_", "") else "X"
            name = base
            while name in reserved or name in used:
                used[base] = used.get(base, 1) + 1
                name = f"{base}{used[base]}"
            used[name] = 1
        out_names.append(name)
        classifiers.append(kind.domain)
        kind = open_var(kind.body, name)
        i += 1
    return out_names, classifiers


def elaborate_mode(a: str, sig: Signature, explicit: Sequence[Tuple[str, str]]) -> ModedFamily:
    """
    把显式参数的极性推广到隐式参数。

    出现在某个输入参数类型中的隐式参数是输入（迭代到不动点），
    其余隐式参数是输出。
    """
    decl = sig.lookup(a)
    if decl is None or not decl.is_family:
        raise ParseError(f"%mode: {a} is not a declared type family")
    n_implicit = decl.implicit
    arity = 0
    k = decl.classifier
    while isinstance(k, Pi):
        arity += 1
        k = k.body
    if len(explicit) != arity - n_implicit:
        raise ParseError(f"%mode {a}: expected {arity - n_implicit} arguments, got {len(explicit)}")

    names_hint: List[Optional[str]] = [None] * n_implicit + [n for n, _ in explicit]
    names, classifiers = _open_kind(decl.classifier, names_hint)
    pol: Dict[str, str] = {}
    for (_, p), name in zip(explicit, names[n_implicit:]):
        pol[name] = p
    implicit_names = set(names[:n_implicit])
    changed = True
    while changed:
        changed = False
        for name, cls in zip(names, classifiers):
            if pol.get(name) != INPUT:
                continue
            for v in free_vars(cls):
                if v in implicit_names and v not in pol:
                    pol[v] = INPUT
                    changed = True
    for name in names[:n_implicit]:
        pol.setdefault(name, OUTPUT)

    for name, cls in zip(names, classifiers):
        if pol[name] != INPUT:
            continue
        for v in free_vars(cls):
            if v in pol and pol[v] == OUTPUT:
                raise IllDefinedMode(a, name, v)

    mf = ModedFamily(a, tuple(names), tuple(classifiers), tuple(pol[n] for n in names),
                     tuple(i < n_implicit for i in range(len(names))))
    logger.debug(f"mode {a}: {mf.describe()}")
    return mf


# ---------------------------------------------------------------------------
# 子句的模式分析
# ---------------------------------------------------------------------------

def _premise_mode(cl: Clause, index: int, fam: Fam, mf: ModedFamily,
                  others: Optional[Mapping[str, ModedFamily]], dname: str) -> ModedFamily:
    if not isinstance(fam, Atom):
        raise ModeError(cl.const, index, dname, "(hypothetical premises are not supported)")
    if fam.const == mf.family:
        return mf
    if others and fam.const in others:
        return others[fam.const]
    raise ModeError(cl.const, index, dname, f"(no mode declared for {fam.const})")


def _vars(terms: Sequence[Obj], scope: Context) -> List[str]:
    names = scope.names()
    seen = set()
    for m in terms:
        seen.update(free_vars(m))
    return [n for n in names if n in seen]


def strict_vars(terms: Sequence[Obj], scope: Context) -> List[str]:
    return [n for n in scope.names() if any(strict_occurrence_exists(m, n) for m in terms)]


def check_mode_consistency(cl: Clause, mf: ModedFamily,
                           others: Optional[Mapping[str, ModedFamily]] = None) -> None:
    ground = set(strict_vars(mf.input_args(cl.head), cl.params))
    for i, (dname, fam) in enumerate(cl.premises, start=1):
        pmf = _premise_mode(cl, i, fam, mf, others, dname)
        for v in _vars(pmf.input_args(fam), cl.params):
            if v not in ground:
                raise ModeError(cl.const, i, v)
        ground.update(strict_vars(pmf.output_args(fam), cl.params))
    for v in _vars(mf.output_args(cl.head), cl.params):
        if v not in ground:
            raise ModeError(cl.const, None, v, "in an output of the head")
    logger.debug(f"{cl.const} is mode consistent")


def _explicit_collect(t: Term, sig: Signature, seen: Dict[str, None]) -> None:
    if isinstance(t, Root):
        skip = 0
        if isinstance(t.head, FVar):
            seen.setdefault(t.head.name)
        elif isinstance(t.head, Const):
            decl = sig.lookup(t.head.name)
            skip = decl.implicit if decl is not None else 0
        for a in t.spine[skip:]:
            _explicit_collect(a, sig, seen)
    elif isinstance(t, Lam):
        _explicit_collect(t.body, sig, seen)


def output_variables(fam: Atom, pmf: ModedFamily, sig: Signature, scope: Context) -> List[str]:
    """前提的输出变量：显式输出参数中出现的变量，不进入常量的隐式参数。"""
    seen: Dict[str, None] = {}
    for i, p in enumerate(pmf.polarities):
        if p == OUTPUT and not pmf.implicit[i]:
            _explicit_collect(fam.spine[i], sig, seen)
    return [n for n in scope.names() if n in seen]


def check_output_freshness(cl: Clause, mf: ModedFamily, sig: Signature,
                           others: Optional[Mapping[str, ModedFamily]] = None) -> None:
    for i, (dname, fam) in enumerate(cl.premises, start=1):
        pmf = _premise_mode(cl, i, fam, mf, others, dname)
        ins = set(_vars(pmf.input_args(fam), cl.params))
        for v in output_variables(fam, pmf, sig, cl.params):
            if v in ins:
                raise FreshnessError(cl.const, i, v)


def input_variables(cl: Clause, mf: ModedFamily) -> Context:
    """Γ^I_c：头部输入中出现的变量（按依赖闭包）。"""
    return dependency_closure(cl.params, _vars(mf.input_args(cl.head), cl.params))


def clause_contexts(cl: Clause, mf: ModedFamily) -> List[Context]:
    """Γ_{c_0} … Γ_{c_m}：Γ_{c_i} = Γ_{c_{i-1}}, A_i 的输出变量, D_i:A_i。"""
    contexts = [input_variables(cl, mf)]
    for dname, fam in cl.premises:
        prev = contexts[-1]
        outs = [v for v in _vars(mf.output_args(fam), cl.params) if v not in prev]
        closure = dependency_closure(cl.params, outs).without(prev.names())
        contexts.append(prev.concat(closure).extend(dname, fam))
    return contexts
