"""
Termination module.

This module is part of the LF Totality Checker project.
"""

# termination.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

from errors import TerminationError
from terms import Atom, BVar, FVar, Lam, Root, Term, Obj, free_vars, fresh_local, occurs_free, open_var

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Subterm:
    arg: str

    @property
    def names(self) -> Tuple[str, ...]:
        return (self.arg,)

    def __str__(self) -> str:
        return self.arg


@dataclass(frozen=True)
class Lex:
    args: Tuple[str, ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return self.args

    def __str__(self) -> str:
        return "{" + " ".join(self.args) + "}"


@dataclass(frozen=True)
class Simul:
    args: Tuple[str, ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return self.args

    def __str__(self) -> str:
        return "[" + " ".join(self.args) + "]"


TerminationOrder = Union[Subterm, Lex, Simul]


# ---------------------------------------------------------------------------
# 严格子项序
# ---------------------------------------------------------------------------

def subterm_less(m: Term, n: Term) -> bool:
    """
    m ⊲ n：m 是 n 的严格子项。

    只穿过常量头与局部绑定参数头的脊柱；自由上下文变量的应用不展开。
    穿过 λ 时用新变量打开，或用 m 中出现而 n 中不出现的自由变量打开，
    这样 M x ⊲ abs ([x] M x) 成立。
    """
    return _less(m, n, frozenset())


def subterm_leq(m: Term, n: Term) -> bool:
    return m == n or subterm_less(m, n)


def _binder_candidates(m: Term, n: Lam) -> Iterable[str]:
    for v in free_vars(m):
        if not occurs_free(n, v):
            yield v
    yield fresh_local("w")


def _leq(m: Term, n: Term, local: frozenset) -> bool:
    if m == n:
        return True
    if isinstance(n, Lam):
        return any(_leq(m, open_var(n.body, x), local | {x}) for x in _binder_candidates(m, n))
    return _less(m, n, local)


def _less(m: Term, n: Term, local: frozenset) -> bool:
    if isinstance(n, Lam):
        return any(_less(m, open_var(n.body, x), local | {x}) for x in _binder_candidates(m, n))
    if not isinstance(n, (Root, Atom)):
        return False
    if isinstance(n, Root):
        head = n.head
        if isinstance(head, FVar) and head.name not in local:
            return False
        if isinstance(head, BVar):
            return False
    return any(_leq(m, arg, local) for arg in n.spine)


def order_decreases(order: TerminationOrder, smaller: Mapping[str, Obj], larger: Mapping[str, Obj]) -> bool:
    """比较前提与头部在终止序参数上的实参。"""
    if isinstance(order, Subterm):
        return subterm_less(smaller[order.arg], larger[order.arg])
    if isinstance(order, Lex):
        for name in order.args:
            if subterm_less(smaller[name], larger[name]):
                return True
            if smaller[name] != larger[name]:
                return False
        return False
    if isinstance(order, Simul):
        pairs = [(smaller[n], larger[n]) for n in order.args]
        return all(subterm_leq(s, l) for s, l in pairs) and any(subterm_less(s, l) for s, l in pairs)
    raise TypeError(f"unknown termination order {order!r}")


def check_order_arguments(order: TerminationOrder, mf) -> None:
    inputs = set(mf.inputs.names())
    for name in order.names:
        if name not in inputs:
            raise TerminationError("%total", 0, name, "is not an input parameter")


def check_termination(mf, clauses: Sequence, order: TerminationOrder) -> None:
    check_order_arguments(order, mf)
    for cl in clauses:
        head: Dict[str, Obj] = dict(zip(mf.names, cl.head.spine))
        for i, (dname, fam) in enumerate(cl.premises, start=1):
            if not isinstance(fam, Atom) or fam.const != mf.family:
                raise TerminationError(cl.const, i, dname, f"premise is not a call to {mf.family}")
            prem = dict(zip(mf.names, fam.spine))
            if not order_decreases(order, prem, head):
                raise TerminationError(cl.const, i, str(order), "does not decrease")
        logger.debug(f"{cl.const} decreases in {order}")
