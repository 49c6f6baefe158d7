"""
Terms module.

This module is part of the LF Totality Checker project.
"""

# terms.py
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 头部与规范项
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class FVar:
    name: str


@dataclass(frozen=True)
class BVar:
    index: int


Head = Union[Const, FVar, BVar]


@dataclass(frozen=True)
class Root:
    """对象 h M1 ... Mn（脊柱形式）。"""
    head: Head
    spine: Tuple["Obj", ...] = ()


@dataclass(frozen=True)
class Lam:
    """λ 抽象。绑定名与类型标注不参与相等比较。"""
    hint: str = field(compare=False)
    body: "Obj" = None
    domain: Optional["Fam"] = field(default=None, compare=False)


@dataclass(frozen=True)
class Atom:
    """类型族常量的完全应用 a M1 ... Mn。"""
    const: str
    spine: Tuple["Obj", ...] = ()


@dataclass(frozen=True)
class Pi:
    """族层与种类层共用的 Π 抽象。"""
    hint: str = field(compare=False)
    domain: "Fam" = None
    body: Union["Fam", "Kind"] = None


@dataclass(frozen=True)
class FamLam:
    hint: str = field(compare=False)
    domain: "Fam" = None
    body: "Fam" = None


@dataclass(frozen=True)
class Type:
    pass


Obj = Union[Root, Lam]
Fam = Union[Atom, Pi, FamLam]
Kind = Union[Type, Pi]
Term = Union[Root, Lam, Atom, Pi, FamLam, Type]

TYPE = Type()

# internal names for transiently opened binders; never valid surface identifiers
_locals = itertools.count(1)


def fresh_local(hint: str = "x") -> str:
    return f"#{hint}{next(_locals)}"


def local_hint(name: str) -> str:
    """fresh_local 名字去掉 # 和计数后的提示，打印结果与计数器无关。"""
    return name.lstrip("#").rstrip("0123456789") or "x"


def reset_locals() -> None:
    global _locals
    _locals = itertools.count(1)


def var(name: str, *spine: Obj) -> Root:
    return Root(FVar(name), tuple(spine))


def const(name: str, *spine: Obj) -> Root:
    return Root(Const(name), tuple(spine))


def atom(name: str, *spine: Obj) -> Atom:
    return Atom(name, tuple(spine))


def arrow(domain: Fam, body: Union[Fam, Kind]) -> Pi:
    return Pi("_", domain, body)


# ---------------------------------------------------------------------------
# 遍历、移位与层级代换
# ---------------------------------------------------------------------------

RootFn = Callable[[Head, Tuple[Obj, ...], int], Obj]


def _map_roots(t: Term, fn: RootFn, depth: int = 0) -> Term:
    if isinstance(t, Root):
        spine = tuple(_map_roots(a, fn, depth) for a in t.spine)
        return fn(t.head, spine, depth)
    if isinstance(t, Lam):
        domain = None if t.domain is None else _map_roots(t.domain, fn, depth)
        return Lam(t.hint, _map_roots(t.body, fn, depth + 1), domain)
    if isinstance(t, Atom):
        return Atom(t.const, tuple(_map_roots(a, fn, depth) for a in t.spine))
    if isinstance(t, Pi):
        return Pi(t.hint, _map_roots(t.domain, fn, depth), _map_roots(t.body, fn, depth + 1))
    if isinstance(t, FamLam):
        return FamLam(t.hint, _map_roots(t.domain, fn, depth), _map_roots(t.body, fn, depth + 1))
    if isinstance(t, Type):
        return t
    raise TypeError(f"not a term: {t!r}")


def shift(t: Term, d: int, cutoff: int = 0) -> Term:
    if d == 0:
        return t

    def on_root(head, spine, depth):
        if isinstance(head, BVar) and head.index >= cutoff + depth:
            return Root(BVar(head.index + d), spine)
        return Root(head, spine)

    return _map_roots(t, on_root)


def apply_spine(m: Term, args: Sequence[Obj]) -> Term:
    """层级应用：对 λ 头立即做 β 归约，保持规范形式。"""
    for i, arg in enumerate(args):
        if isinstance(m, (Lam, FamLam)):
            m = instantiate(m.body, arg)
        elif isinstance(m, Root):
            return Root(m.head, m.spine + tuple(args[i:]))
        elif isinstance(m, Atom):
            return Atom(m.const, m.spine + tuple(args[i:]))
        else:
            raise TypeError(f"cannot apply {m!r}")
    return m


def instantiate(body: Term, arg: Obj) -> Term:
    """将最外层约束变量 BVar(0) 替换为 arg。"""

    def on_root(head, spine, depth):
        if isinstance(head, BVar):
            if head.index == depth:
                return apply_spine(shift(arg, depth), spine)
            if head.index > depth:
                return Root(BVar(head.index - 1), spine)
        return Root(head, spine)

    return _map_roots(body, on_root)


def open_var(body: Term, name: str) -> Term:
    return instantiate(body, Root(FVar(name)))


def abstract(t: Term, name: str) -> Term:
    """open_var 的逆操作：把自由变量 name 变成 BVar(0)。t 必须是局部闭合的。"""

    def on_root(head, spine, depth):
        if isinstance(head, FVar) and head.name == name:
            return Root(BVar(depth), spine)
        return Root(head, spine)

    return _map_roots(shift(t, 1), on_root)


def subst_fvars(t: Term, mapping: Dict[str, Obj]) -> Term:
    """同时代换自由变量，代换值须局部闭合。"""
    if not mapping:
        return t

    def on_root(head, spine, depth):
        if isinstance(head, FVar) and head.name in mapping:
            return apply_spine(mapping[head.name], spine)
        return Root(head, spine)

    return _map_roots(t, on_root)


def rename_fvars(t: Term, renaming: Dict[str, str]) -> Term:
    return subst_fvars(t, {old: Root(FVar(new)) for old, new in renaming.items()})


# ---------------------------------------------------------------------------
# 自由变量
# ---------------------------------------------------------------------------

def free_vars(t: Term) -> List[str]:
    """按首次出现顺序列出自由变量（λ 的类型标注不计入）。"""
    seen: Dict[str, None] = {}
    _collect(t, seen)
    return list(seen)


def _collect(t: Term, seen: Dict[str, None]) -> None:
    if isinstance(t, Root):
        if isinstance(t.head, FVar):
            seen.setdefault(t.head.name)
        for a in t.spine:
            _collect(a, seen)
    elif isinstance(t, Lam):
        _collect(t.body, seen)
    elif isinstance(t, Atom):
        for a in t.spine:
            _collect(a, seen)
    elif isinstance(t, (Pi, FamLam)):
        _collect(t.domain, seen)
        _collect(t.body, seen)


def occurs_free(t: Term, name: str) -> bool:
    return name in free_vars(t)


def constants_of(t: Term) -> List[str]:
    out: Dict[str, None] = {}

    def walk(u):
        if isinstance(u, Root):
            if isinstance(u.head, Const):
                out.setdefault(u.head.name)
            for a in u.spine:
                walk(a)
        elif isinstance(u, Lam):
            walk(u.body)
        elif isinstance(u, Atom):
            out.setdefault(u.const)
            for a in u.spine:
                walk(a)
        elif isinstance(u, (Pi, FamLam)):
            walk(u.domain)
            walk(u.body)

    walk(t)
    return list(out)


def pi_arity(t: Term) -> int:
    n = 0
    while isinstance(t, Pi):
        n += 1
        t = t.body
    return n


def bvar_occurs(t: Term, index: int = 0) -> bool:
    """BVar(index) 是否在 t 中出现（用于判断 Π 是否为非依赖箭头）。"""
    found = []

    def on_root(head, spine, depth):
        if isinstance(head, BVar) and head.index == index + depth:
            found.append(True)
        return Root(head, spine)

    _map_roots(t, on_root)
    return bool(found)


# ---------------------------------------------------------------------------
# η 展开
# ---------------------------------------------------------------------------

def eta_expand(head: Head, ty: Fam) -> Obj:
    """把头 h 按其类型 Πx1:A1...Πxn:An.P 展开为 βη-长形式。"""
    binders: List[Tuple[str, str, Fam]] = []
    args: List[Obj] = []
    t = ty
    while isinstance(t, Pi):
        n = fresh_local(t.hint)
        binders.append((n, t.hint, t.domain))
        args.append(eta_expand(FVar(n), t.domain))
        t = open_var(t.body, n)
    body: Obj = Root(head, tuple(args))
    for n, hint, dom in reversed(binders):
        body = Lam(hint, abstract(body, n), dom)
    return body


def eta_expand_family(name: str, kind: Kind) -> Fam:
    binders: List[Tuple[str, str, Fam]] = []
    args: List[Obj] = []
    k = kind
    while isinstance(k, Pi):
        n = fresh_local(k.hint)
        binders.append((n, k.hint, k.domain))
        args.append(eta_expand(FVar(n), k.domain))
        k = open_var(k.body, n)
    fam: Fam = Atom(name, tuple(args))
    for n, hint, dom in reversed(binders):
        fam = FamLam(hint, dom, abstract(fam, n))
    return fam


# ---------------------------------------------------------------------------
# 打印
# ---------------------------------------------------------------------------

def _atomic(t: Term) -> bool:
    if isinstance(t, Root):
        return not t.spine
    if isinstance(t, Atom):
        return not t.spine
    return isinstance(t, Type)


def _pick(hint: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    base = hint if hint and hint != "_" and not hint.startswith("#") else "x"
    base = base.lstrip("#") or "x"
    if base not in avoid:
        return base
    for i in itertools.count(1):
        cand = f"{base}{i}"
        if cand not in avoid:
            return cand
    raise AssertionError("unreachable")


def show(t: Term, names: Optional[List[str]] = None) -> str:
    """以表层语法打印：λ 为 [x] M，Π 为 {x:A} B，非依赖 Π 为 A -> B。"""
    return _show(t, list(names or []))


def _used(t: Term) -> List[str]:
    return free_vars(t) + constants_of(t)


def _show(t: Term, names: List[str]) -> str:
    if isinstance(t, Root):
        h = t.head
        if isinstance(h, BVar):
            hs = names[len(names) - 1 - h.index] if h.index < len(names) else f"?{h.index}"
        else:
            hs = h.name
        if not t.spine:
            return hs
        return " ".join([hs] + [_show_arg(a, names) for a in t.spine])
    if isinstance(t, Atom):
        if not t.spine:
            return t.const
        return " ".join([t.const] + [_show_arg(a, names) for a in t.spine])
    if isinstance(t, Lam):
        x = _pick(t.hint, names + _used(t.body))
        return f"[{x}] {_show(t.body, names + [x])}"
    if isinstance(t, FamLam):
        x = _pick(t.hint, names + _used(t.body))
        return f"[{x}:{_show(t.domain, names)}] {_show(t.body, names + [x])}"
    if isinstance(t, Pi):
        if not bvar_occurs(t.body):
            dom = _show(t.domain, names)
            if isinstance(t.domain, Pi):
                dom = f"({dom})"
            return f"{dom} -> {_show(t.body, names + ['_'])}"
        x = _pick(t.hint, names + _used(t.body))
        return f"{{{x}:{_show(t.domain, names)}}} {_show(t.body, names + [x])}"
    if isinstance(t, Type):
        return "type"
    raise TypeError(f"not a term: {t!r}")


def _show_arg(a: Term, names: List[str]) -> str:
    s = _show(a, names)
    return s if _atomic(a) else f"({s})"


def show_arg(a: Term) -> str:
    return _show_arg(a, [])


# ---------------------------------------------------------------------------
# 表层（未规范化）语法
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RIdent:
    name: str
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RApp:
    fn: "Raw"
    arg: "Raw"


@dataclass(frozen=True)
class RLam:
    name: str
    domain: Optional["Raw"]
    body: "Raw"


@dataclass(frozen=True)
class RPi:
    name: Optional[str]
    domain: "Raw"
    body: "Raw"


@dataclass(frozen=True)
class RType:
    pass


Raw = Union[RIdent, RApp, RLam, RPi, RType]
RAW_TYPES = (RIdent, RApp, RLam, RPi, RType)


def raw_spine(r: Raw) -> Tuple[Raw, List[Raw]]:
    args: List[Raw] = []
    while isinstance(r, RApp):
        args.append(r.arg)
        r = r.fn
    args.reverse()
    return r, args


def raw_position(r: Raw) -> Tuple[int, int]:
    head, _ = raw_spine(r)
    if isinstance(head, RIdent):
        return head.line, head.column
    if isinstance(head, (RLam, RPi)):
        return raw_position(head.domain) if head.domain is not None else raw_position(head.body)
    return 0, 0
