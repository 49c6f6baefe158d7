"""
LF Core module.

This module is part of the LF Totality Checker project.
"""

# lf_core.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from errors import IllTyped, LFError
from terms import (
    Atom, BVar, Const, FamLam, FVar, Lam, Pi, RApp, RAW_TYPES, RIdent, RLam, RPi,
    Root, RType, Term, Type, TYPE, Fam, Obj, Raw,
    abstract, apply_spine, eta_expand, eta_expand_family, fresh_local, free_vars,
    instantiate, open_var, show, subst_fvars,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 签名、上下文与代换
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decl:
    name: str
    classifier: Term
    is_family: bool
    implicit: int = 0


@dataclass(frozen=True)
class Signature:
    decls: Tuple[Decl, ...] = ()

    @cached_property
    def _index(self) -> Dict[str, Decl]:
        return {d.name: d for d in self.decls}

    def lookup(self, name: str) -> Optional[Decl]:
        return self._index.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[Decl]:
        return iter(self.decls)

    def __len__(self) -> int:
        return len(self.decls)

    def extend(self, decl: Decl) -> "Signature":
        return Signature(self.decls + (decl,))

    def replace(self, decl: Decl) -> "Signature":
        return Signature(tuple(decl if d.name == decl.name else d for d in self.decls))

    def prefix(self, n: int) -> "Signature":
        return Signature(self.decls[:n])

    def families(self) -> List[Decl]:
        return [d for d in self.decls if d.is_family]

    def objects(self) -> List[Decl]:
        return [d for d in self.decls if not d.is_family]

    def names(self) -> List[str]:
        return [d.name for d in self.decls]


@dataclass(frozen=True)
class Context:
    entries: Tuple[Tuple[str, Fam], ...] = ()

    @cached_property
    def _index(self) -> Dict[str, Fam]:
        return dict(self.entries)

    def lookup(self, name: str) -> Optional[Fam]:
        return self._index.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[Tuple[str, Fam]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> List[str]:
        return [n for n, _ in self.entries]

    def extend(self, name: str, fam: Fam) -> "Context":
        return Context(self.entries + ((name, fam),))

    def concat(self, other: Union["Context", Iterable[Tuple[str, Fam]]]) -> "Context":
        return Context(self.entries + tuple(other))

    def index_of(self, name: str) -> int:
        return self.names().index(name)

    def restrict(self, names: Iterable[str]) -> "Context":
        keep = set(names)
        return Context(tuple((n, a) for n, a in self.entries if n in keep))

    def without(self, names: Iterable[str]) -> "Context":
        drop = set(names)
        return Context(tuple((n, a) for n, a in self.entries if n not in drop))

    def map_types(self, subst: "Substitution") -> "Context":
        return Context(tuple((n, apply_subst(a, subst)) for n, a in self.entries))

    def __str__(self) -> str:
        return ", ".join(f"{n}:{show(a)}" for n, a in self.entries) or "."


@dataclass(frozen=True)
class Substitution:
    """有限映射 x ↦ M；定义域之外视为恒等。"""
    bindings: Tuple[Tuple[str, Obj], ...] = ()
    domain: Optional[Context] = field(default=None, compare=False)

    @classmethod
    def of(cls, mapping: Union[Dict[str, Obj], Iterable[Tuple[str, Obj]]],
           domain: Optional[Context] = None) -> "Substitution":
        items = mapping.items() if isinstance(mapping, dict) else mapping
        return cls(tuple(items), domain)

    @cached_property
    def _index(self) -> Dict[str, Obj]:
        return dict(self.bindings)

    def as_dict(self) -> Dict[str, Obj]:
        return dict(self._index)

    def get(self, name: str, default=None):
        return self._index.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.bindings)

    def names(self) -> List[str]:
        return [n for n, _ in self.bindings]

    def restrict(self, names: Iterable[str]) -> "Substitution":
        keep = set(names)
        return Substitution(tuple((n, m) for n, m in self.bindings if n in keep))

    def __str__(self) -> str:
        return "(" + " ".join(f"{_paren(m)}/{n}" for n, m in self.bindings) + ")"


def _paren(m: Term) -> str:
    s = show(m)
    if isinstance(m, Root) and not m.spine:
        return s
    return f"({s})"


def identity(ctx: Context) -> Substitution:
    return Substitution(tuple((n, eta_expand(FVar(n), a)) for n, a in ctx), ctx)


def apply_subst(t: Term, s: Substitution) -> Term:
    """避免捕获的代换；层级代换顺带完成重新规范化。"""
    if not s.bindings:
        return t
    return subst_fvars(t, s.as_dict())


def compose_subst(s1: Substitution, s2: Substitution,
                  domain: Optional[Context] = None) -> Substitution:
    """σ∘θ：(∅)∘θ = ∅，(σ, M/x)∘θ = (σ∘θ, M[θ]/x)。给出 domain 时先用恒等补齐 σ。"""
    domain = domain if domain is not None else s1.domain
    items: List[Tuple[str, Obj]] = []
    if domain is not None:
        for n, a in domain:
            if n in s1:
                items.append((n, apply_subst(s1.get(n), s2)))
            else:
                items.append((n, apply_subst(eta_expand(FVar(n), a), s2)))
        extra = [n for n in s1.names() if n not in domain]
        items.extend((n, apply_subst(s1.get(n), s2)) for n in extra)
    else:
        items = [(n, apply_subst(m, s2)) for n, m in s1.bindings]
    return Substitution(tuple(items), domain)


# ---------------------------------------------------------------------------
# 规范形式类型检查（脊柱形式）
# ---------------------------------------------------------------------------

def _fail(rule: str, t: Term, path: Sequence[int], detail: str = "") -> IllTyped:
    return IllTyped(rule, show(t), path, detail)


def _head_type(ctx: Context, sig: Signature, head, t: Term, path) -> Fam:
    if isinstance(head, Const):
        d = sig.lookup(head.name)
        if d is None:
            raise _fail("obj-const", t, path, f"undeclared constant {head.name}")
        if d.is_family:
            raise _fail("obj-const", t, path, f"{head.name} is a type family")
        return d.classifier
    if isinstance(head, FVar):
        a = ctx.lookup(head.name)
        if a is None:
            raise _fail("obj-var", t, path, f"unbound variable {head.name}")
        return a
    raise _fail("obj-var", t, path, "dangling bound variable")


def _check_spine(ctx, sig, spine, ty, t, path, rule) -> Tuple[Tuple[Obj, ...], Term]:
    out = []
    for i, arg in enumerate(spine):
        if not isinstance(ty, Pi):
            raise _fail(rule, t, path, "too many arguments")
        m = _check_obj(ctx, sig, arg, ty.domain, path + (i,))
        out.append(m)
        ty = instantiate(ty.body, m)
    return tuple(out), ty


def _check_obj(ctx: Context, sig: Signature, m: Obj, a: Fam, path=()) -> Obj:
    """检查 Γ ⊢ M : A 并返回 η-长形式。"""
    if isinstance(a, FamLam):
        raise _fail("conv", a, path, "classifier is not a type")
    if isinstance(m, Lam):
        if not isinstance(a, Pi):
            raise _fail("obj-lam", m, path, f"expected {show(a)}")
        x = fresh_local(m.hint)
        body = _check_obj(ctx.extend(x, a.domain), sig, open_var(m.body, x), open_var(a.body, x), path + (0,))
        return Lam(m.hint, abstract(body, x), a.domain)
    if isinstance(m, Root):
        rule = "obj-const" if isinstance(m.head, Const) else "obj-var"
        ty = _head_type(ctx, sig, m.head, m, path)
        spine, ty = _check_spine(ctx, sig, m.spine, ty, m, path, "obj-app")
        result: Obj = Root(m.head, spine)
        if isinstance(ty, Pi):
            if not isinstance(a, Pi):
                raise _fail("obj-app", m, path, "too few arguments")
            # η-短的项：补齐 λ
            return _check_obj(ctx, sig, _eta_root(result, ty), a, path)
        if ty != a:
            raise _fail("conv", m, path, f"has type {show(ty)}, expected {show(a)}")
        return result
    raise _fail("obj-app", m, path, "not an object")


def _eta_root(m: Root, ty: Pi) -> Obj:
    names = []
    t: Term = ty
    while isinstance(t, Pi):
        x = fresh_local(t.hint)
        names.append((x, t.hint, t.domain))
        t = open_var(t.body, x)
    body: Obj = Root(m.head, m.spine + tuple(eta_expand(FVar(x), d) for x, _, d in names))
    for x, hint, d in reversed(names):
        body = Lam(hint, abstract(body, x), d)
    return body


def _check_fam(ctx: Context, sig: Signature, a: Fam, k: Term, path=()) -> Fam:
    if isinstance(a, Atom):
        d = sig.lookup(a.const)
        if d is None or not d.is_family:
            raise _fail("fam-const", a, path, f"undeclared type family {a.const}")
        spine, kind = _check_spine(ctx, sig, a.spine, d.classifier, a, path, "fam-app")
        if isinstance(kind, Pi):
            if not isinstance(k, Pi):
                raise _fail("fam-app", a, path, "too few arguments")
            return _check_fam(ctx, sig, _eta_atom(Atom(a.const, spine), kind), k, path)
        if not isinstance(k, Type):
            raise _fail("conv", a, path, f"has kind type, expected {show(k)}")
        return Atom(a.const, spine)
    if isinstance(a, Pi):
        if not isinstance(k, Type):
            raise _fail("fam-pi", a, path, f"expected kind {show(k)}")
        dom = _check_fam(ctx, sig, a.domain, TYPE, path + (0,))
        x = fresh_local(a.hint)
        body = _check_fam(ctx.extend(x, dom), sig, open_var(a.body, x), TYPE, path + (1,))
        return Pi(a.hint, dom, abstract(body, x))
    if isinstance(a, FamLam):
        if not isinstance(k, Pi):
            raise _fail("fam-lam", a, path, f"expected kind {show(k)}")
        dom = _check_fam(ctx, sig, a.domain, TYPE, path + (0,))
        if dom != k.domain:
            raise _fail("conv", a, path, f"domain {show(dom)} against {show(k.domain)}")
        x = fresh_local(a.hint)
        body = _check_fam(ctx.extend(x, dom), sig, open_var(a.body, x), open_var(k.body, x), path + (1,))
        return FamLam(a.hint, dom, abstract(body, x))
    raise _fail("fam-const", a, path, "not a type family")


def _eta_atom(a: Atom, kind: Pi) -> Fam:
    names = []
    t: Term = kind
    while isinstance(t, Pi):
        x = fresh_local(t.hint)
        names.append((x, t.hint, t.domain))
        t = open_var(t.body, x)
    body: Fam = Atom(a.const, a.spine + tuple(eta_expand(FVar(x), d) for x, _, d in names))
    for x, hint, d in reversed(names):
        body = FamLam(hint, d, abstract(body, x))
    return body


def _check_kind(ctx: Context, sig: Signature, k: Term, path=()) -> Term:
    if isinstance(k, Type):
        return k
    if isinstance(k, Pi):
        dom = _check_fam(ctx, sig, k.domain, TYPE, path + (0,))
        x = fresh_local(k.hint)
        body = _check_kind(ctx.extend(x, dom), sig, open_var(k.body, x), path + (1,))
        return Pi(k.hint, dom, abstract(body, x))
    raise _fail("kind-type", k, path, "not a kind")


def check_object(ctx: Context, sig: Signature, m: Obj, a: Fam) -> None:
    _check_obj(ctx, sig, m, a)


def check_family(ctx: Context, sig: Signature, a: Fam, k: Term) -> None:
    _check_fam(ctx, sig, a, k)


def check_kind(ctx: Context, sig: Signature, k: Term) -> None:
    _check_kind(ctx, sig, k)


def check_context(sig: Signature, ctx: Context) -> None:
    seen = Context()
    for name, a in ctx:
        if name in seen:
            raise IllTyped("ctx-var", name, (), "duplicate variable")
        _check_fam(seen, sig, a, TYPE)
        seen = seen.extend(name, a)


def check_signature(sig: Signature) -> None:
    for i, d in enumerate(sig):
        prefix = sig.prefix(i)
        if d.name in prefix:
            raise IllTyped("sig-const", d.name, (), "duplicate declaration")
        if d.is_family:
            _check_kind(Context(), prefix, d.classifier)
        else:
            _check_fam(Context(), prefix, d.classifier, TYPE)
        logger.debug(f"declaration {d.name} checked")


def is_canonical(ctx: Context, sig: Signature, m: Obj, a: Fam) -> bool:
    try:
        return _check_obj(ctx, sig, m, a) == m
    except LFError:
        return False


# ---------------------------------------------------------------------------
# 规范化
# ---------------------------------------------------------------------------

def normalize(t: Union[Term, Raw], ctx: Context, sig: Signature,
              classifier: Optional[Term] = None) -> Term:
    """返回唯一的 βη-长规范形式；输入可以是表层项（含 β 可约式）或已规范的项。"""
    if isinstance(t, RAW_TYPES):
        term, _ = _Elaborator(sig).run(t, ctx, classifier)
        return term
    if classifier is not None:
        if isinstance(t, (Root, Lam)):
            return _check_obj(ctx, sig, t, classifier)
        if isinstance(classifier, (Type, Pi)) and isinstance(t, (Atom, Pi, FamLam)):
            return _check_fam(ctx, sig, t, classifier)
        return _check_kind(ctx, sig, t)
    term, _ = synthesize(t, ctx, sig)
    return term


def synthesize(t: Term, ctx: Context, sig: Signature) -> Tuple[Term, Term]:
    """对可推导类型的规范项返回 (η-长形式, 分类)。"""
    if isinstance(t, Root):
        ty = _head_type(ctx, sig, t.head, t, ())
        spine, ty = _check_spine(ctx, sig, t.spine, ty, t, (), "obj-app")
        m = Root(t.head, spine)
        if isinstance(ty, Pi):
            return _check_obj(ctx, sig, _eta_root(m, ty), ty), ty
        return m, ty
    if isinstance(t, Lam):
        if t.domain is None:
            raise _fail("obj-lam", t, (), "cannot infer the type of an unannotated abstraction")
        dom = _check_fam(ctx, sig, t.domain, TYPE)
        x = fresh_local(t.hint)
        body, bty = synthesize(open_var(t.body, x), ctx.extend(x, dom), sig)
        return Lam(t.hint, abstract(body, x), dom), Pi(t.hint, dom, abstract(bty, x))
    if isinstance(t, Atom):
        d = sig.lookup(t.const)
        if d is None or not d.is_family:
            raise _fail("fam-const", t, (), f"undeclared type family {t.const}")
        spine, kind = _check_spine(ctx, sig, t.spine, d.classifier, t, (), "fam-app")
        a = Atom(t.const, spine)
        if isinstance(kind, Pi):
            return _eta_atom(a, kind), kind
        return a, kind
    if isinstance(t, Pi):
        dom = _check_fam(ctx, sig, t.domain, TYPE)
        x = fresh_local(t.hint)
        body, cls = synthesize(open_var(t.body, x), ctx.extend(x, dom), sig)
        if isinstance(cls, Type) and isinstance(body, (Atom, Pi)):
            return Pi(t.hint, dom, abstract(body, x)), TYPE
        # 种类层的 Π
        return _check_kind(ctx, sig, t), None
    if isinstance(t, FamLam):
        dom = _check_fam(ctx, sig, t.domain, TYPE)
        x = fresh_local(t.hint)
        body, kind = synthesize(open_var(t.body, x), ctx.extend(x, dom), sig)
        return FamLam(t.hint, dom, abstract(body, x)), Pi(t.hint, dom, abstract(kind, x))
    if isinstance(t, Type):
        return t, None
    raise _fail("obj-app", t, (), "not a term")


class _Elaborator:
    """显式表层项的双向规范化：合成/检查，应用时做层级代换。"""

    def __init__(self, sig: Signature):
        self.sig = sig

    def run(self, r: Raw, ctx: Context, classifier: Optional[Term]) -> Tuple[Term, Optional[Term]]:
        if classifier is None:
            return self.synth(r, ctx, {})
        return self.check(r, ctx, {}, classifier), classifier

    def synth(self, r: Raw, ctx: Context, scope: Dict[str, str]) -> Tuple[Term, Optional[Term]]:
        if isinstance(r, RIdent):
            if r.name in scope:
                x = scope[r.name]
                ty = ctx.lookup(x)
                return eta_expand(FVar(x), ty), ty
            if r.name in ctx:
                ty = ctx.lookup(r.name)
                return eta_expand(FVar(r.name), ty), ty
            d = self.sig.lookup(r.name)
            if d is None:
                raise IllTyped("obj-const", r.name, (), "undeclared identifier")
            if d.is_family:
                return eta_expand_family(d.name, d.classifier), d.classifier
            return eta_expand(Const(d.name), d.classifier), d.classifier
        if isinstance(r, RApp):
            fn, ty = self.synth(r.fn, ctx, scope)
            if not isinstance(ty, Pi):
                raise IllTyped("obj-app", show(fn), (), "applied to too many arguments")
            arg = self.check(r.arg, ctx, scope, ty.domain)
            return apply_spine(fn, [arg]), instantiate(ty.body, arg)
        if isinstance(r, RLam):
            if r.domain is None:
                raise IllTyped("obj-lam", r.name, (), "cannot infer the type of an unannotated abstraction")
            dom = self.check(r.domain, ctx, scope, TYPE)
            x = fresh_local(r.name)
            body, bty = self.synth(r.body, ctx.extend(x, dom), {**scope, r.name: x})
            if isinstance(body, (Root, Lam)):
                return Lam(r.name, abstract(body, x), dom), Pi(r.name, dom, abstract(bty, x))
            return FamLam(r.name, dom, abstract(body, x)), Pi(r.name, dom, abstract(bty, x))
        if isinstance(r, RPi):
            dom = self.check(r.domain, ctx, scope, TYPE)
            x = fresh_local(r.name or "x")
            inner = {**scope, r.name: x} if r.name else scope
            body, cls = self.synth(r.body, ctx.extend(x, dom), inner)
            return Pi(r.name or "_", dom, abstract(body, x)), cls
        if isinstance(r, RType):
            return TYPE, None
        raise IllTyped("obj-app", repr(r), (), "not a term")

    def check(self, r: Raw, ctx: Context, scope: Dict[str, str], cls: Term) -> Term:
        if isinstance(r, RLam) and isinstance(cls, Pi):
            if r.domain is not None:
                dom = self.check(r.domain, ctx, scope, TYPE)
                if dom != cls.domain:
                    raise IllTyped("obj-lam", r.name, (), f"annotation {show(dom)} against {show(cls.domain)}")
            x = fresh_local(r.name)
            body = self.check(r.body, ctx.extend(x, cls.domain), {**scope, r.name: x}, open_var(cls.body, x))
            return Lam(r.name, abstract(body, x), cls.domain)
        t, ty = self.synth(r, ctx, scope)
        if ty != cls:
            raise IllTyped("conv", show(t), (), f"has classifier {show(ty) if ty else 'kind'}, expected {show(cls)}")
        return t


# ---------------------------------------------------------------------------
# 相等与最小定义域上下文
# ---------------------------------------------------------------------------

def equal(t1: Term, t2: Term, ctx: Context, sig: Signature) -> bool:
    """规范形式下的 α 相等。"""
    try:
        n1, c1 = synthesize(t1, ctx, sig)
    except LFError:
        n1, c1 = None, None
    try:
        n2, c2 = synthesize(t2, ctx, sig)
    except LFError:
        n2, c2 = None, None
    try:
        if n1 is None and c2 is not None:
            n1 = normalize(t1, ctx, sig, c2)
        if n2 is None and c1 is not None:
            n2 = normalize(t2, ctx, sig, c1)
    except LFError:
        return False
    if n1 is None or n2 is None:
        return t1 == t2
    return n1 == n2


def check_subst_typing(ctx: Context, sig: Signature, s: Substitution, ctx2: Context) -> None:
    """判定 Γ ⊢ σ : Γ′；Γ′ 中缺失的变量按恒等补齐。"""
    extra = [n for n in s.names() if n not in ctx2]
    if extra:
        raise IllTyped("subst-typ", extra[0], (), "substituted variable is not in the domain context")
    theta: Dict[str, Obj] = {}
    for name, a in ctx2:
        expected = subst_fvars(a, theta)
        if name in s:
            m = s.get(name)
            try:
                theta[name] = _check_obj(ctx, sig, m, expected)
            except IllTyped as e:
                raise IllTyped("subst-typ", f"{show(m)}/{name}", e.path, e.detail) from e
        else:
            have = ctx.lookup(name)
            if have is None:
                raise IllTyped("subst-typ", name, (), "identity padding: variable missing from range context")
            if have != expected:
                raise IllTyped("subst-typ", name, (), f"identity padding: {show(have)} against {show(expected)}")
            theta[name] = eta_expand(FVar(name), have)
    logger.debug(f"substitution {s} typed against {ctx2}")


def minimal_domain_context(s: Substitution, ctx2: Context, ambient: Context) -> Context:
    """σ 所需的最小 Γ：值域的自由变量及恒等补齐的变量，按 ambient 中的依赖闭包排序。"""
    need: List[str] = []
    for name, _ in ctx2:
        if name in s:
            need.extend(free_vars(s.get(name)))
        else:
            need.append(name)
    return dependency_closure(ambient, need)


def dependency_closure(ctx: Context, names: Iterable[str]) -> Context:
    wanted = set(names)
    changed = True
    while changed:
        changed = False
        for n, a in ctx:
            if n in wanted:
                for v in free_vars(a):
                    if v not in wanted:
                        wanted.add(v)
                        changed = True
    return ctx.restrict(wanted)
