"""
Twelf Parser module.

This module is part of the LF Totality Checker project.
"""

# twelf_parser.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from lark import Lark, Transformer
from lark.exceptions import UnexpectedInput, VisitError

from errors import IllTyped, LFError, ParseError, ReconstructionAmbiguous
from lf_core import Context, Decl, Signature, check_family, check_kind
from lp_engine import DEFAULT_DEPTH, Goal
from modes import INPUT, OUTPUT, ModedFamily, elaborate_mode
from termination import Lex, Simul, Subterm, TerminationOrder
from terms import (
    Atom, Const, FVar, Lam, Pi, RApp, RIdent, RLam, RPi, RType, Term, TYPE, Obj, Raw,
    abstract, apply_spine, arrow, eta_expand, eta_expand_family, free_vars, fresh_local,
    instantiate, open_var, raw_position, raw_spine, rename_fvars, show, subst_fvars,
)
from unify import Mgu, NameSupply, NoSolution, UnifProblem, stable_topological, unify

logger = logging.getLogger(__name__)

GRAMMAR = r"""
start: _item*

_item: decl
     | mode_decl
     | total_decl
     | name_decl
     | implicit_decl

decl: NAME ":" term "."
mode_decl: "%mode" NAME mode_arg* "."
mode_arg: SIGN NAME
total_decl: "%total" order "(" NAME NAME* ")" "."
name_decl: "%name" NAME NAME* "."
implicit_decl: "%implicit" NAME NAME "."

order: NAME                 -> subterm_order
     | "{" NAME+ "}"        -> lex_order
     | "[" NAME+ "]"        -> simul_order

goal: (NAME ":")? term

SIGN: "+" | "-"
"""

TERM_GRAMMAR = r"""
?term: larrow
?larrow: larrow "<-" rarrow   -> larr
       | rarrow
?rarrow: app "->" rarrow      -> arr
       | app
?app: app arg                 -> apply
    | arg
?arg: NAME                    -> ident
    | "(" term ")"
    | "(" term ":" term ")"   -> ascribe
    | "{" NAME [":" term] "}" term  -> pi
    | "[" NAME [":" term] "]" term  -> lam

NAME: /[A-Za-z0-9_'](?:[A-Za-z0-9_']|-(?!>))*/
COMMENT: /%\{(.|\n)*?\}%/
       | /%(?![a-z{])[^\n]*/

%import common.WS
%ignore WS
%ignore COMMENT
"""

_parser = Lark(GRAMMAR + TERM_GRAMMAR, start=["start", "goal"], parser="lalr", propagate_positions=True)


@dataclass(frozen=True)
class RAscribe:
    """(M : A)：只在重建阶段使用。"""
    term: Raw
    classifier: Raw


@dataclass(frozen=True)
class RBackArrow:
    """B <- A：先重建结论 B，再重建前提 A。"""
    conclusion: Raw
    premise: Raw


@dataclass(frozen=True)
class _DeclItem:
    name: str
    body: Raw
    line: int
    column: int


@dataclass(frozen=True)
class _ModeItem:
    family: str
    args: Tuple[Tuple[str, str], ...]
    line: int
    column: int


@dataclass(frozen=True)
class _ImplicitItem:
    name: str
    count: int
    line: int
    column: int


@dataclass(frozen=True)
class _TotalItem:
    order: Tuple[str, Tuple[str, ...]]
    family: str
    args: Tuple[str, ...]
    line: int
    column: int


class ToRaw(Transformer):
    """lark 语法树 → 表层项与声明。"""

    def NAME(self, token):
        return token

    def ident(self, children):
        tok = children[0]
        if tok == "type":
            return RType()
        return RIdent(str(tok), tok.line, tok.column)

    def apply(self, children):
        return RApp(children[0], children[1])

    def arr(self, children):
        return RPi(None, children[0], children[1])

    def larr(self, children):
        return RBackArrow(children[0], children[1])

    def ascribe(self, children):
        return RAscribe(children[0], children[1])

    def pi(self, children):
        name, domain, body = children
        if domain is None:
            raise ParseError(f"binder {{{name}}} needs a type", name.line, name.column)
        return RPi(str(name), domain, body)

    def lam(self, children):
        name, domain, body = children
        return RLam(str(name), domain, body)

    def decl(self, children):
        name, body = children
        return _DeclItem(str(name), body, name.line, name.column)

    def mode_arg(self, children):
        sign, name = children
        return (str(name), INPUT if sign == "+" else OUTPUT)

    def mode_decl(self, children):
        fam, *args = children
        return _ModeItem(str(fam), tuple(args), fam.line, fam.column)

    def subterm_order(self, children):
        return ("subterm", (str(children[0]),))

    def lex_order(self, children):
        return ("lex", tuple(str(c) for c in children))

    def simul_order(self, children):
        return ("simul", tuple(str(c) for c in children))

    def total_decl(self, children):
        order, fam, *args = children
        return _TotalItem(order, str(fam), tuple(str(a) for a in args), fam.line, fam.column)

    def name_decl(self, children):
        return None

    def implicit_decl(self, children):
        name, count = children
        if not count.isdigit():
            raise ParseError(f"%implicit {name}: {count} is not a number", count.line, count.column)
        return _ImplicitItem(str(name), int(count), name.line, name.column)

    def goal(self, children):
        if len(children) == 2:
            return str(children[0]), children[1]
        return "D", children[0]

    def start(self, children):
        return [c for c in children if c is not None]


def _parse(text: str, start: str):
    try:
        tree = _parser.parse(text, start=start)
        return ToRaw().transform(tree)
    except UnexpectedInput as e:
        raise ParseError(str(e).strip().splitlines()[0],
                         getattr(e, "line", 0), getattr(e, "column", 0)) from e
    except VisitError as e:
        if isinstance(e.orig_exc, LFError):
            raise e.orig_exc from None
        raise


def parse_raw(text: str) -> list:
    return _parse(text, "start")


# ---------------------------------------------------------------------------
# 隐式参数重建
# ---------------------------------------------------------------------------

def _hint(name: str) -> str:
    base = name.lstrip("?#")
    while base and base[-1].isdigit():
        base = base[:-1]
    base = base.rstrip("_")
    return base or "X"


def _is_implicit_name(name: str) -> bool:
    return name != "_" and (name[0].isupper() or name[0] == "_")


@dataclass
class _Reconstructor:
    """
    对单个声明做隐式参数重建。

    大写的自由标识符是隐式变量；常量的隐式参数用元变量填充，
    元变量对作用域内的局部变量做提升。所有类型约束在声明结束时
    一次性交给模式合一求解，未被求解的元变量被泛化为隐式绑定。
    """
    sig: Signature
    supply: NameSupply
    types: Dict[str, Optional[Term]] = field(default_factory=dict)
    metas: Dict[str, str] = field(default_factory=dict)
    locals: Dict[str, Term] = field(default_factory=dict)
    equations: List[Tuple[Term, Term, Raw]] = field(default_factory=list)
    counter: int = 0

    # -- 名字解析 ----------------------------------------------------------

    def _resolve(self, r: RIdent, scope: Dict[str, str]) -> str:
        if r.name in scope:
            return "local"
        if r.name in self.sig:
            return "const"
        if _is_implicit_name(r.name):
            return "implicit"
        if r.name == "_":
            return "wildcard"
        raise ParseError(f"undeclared identifier {r.name}", r.line, r.column)

    def new_meta(self, hint: str, ty: Term, binders: Sequence[str]) -> Obj:
        self.counter += 1
        name = f"?{self.counter}"
        raised = ty
        for b in reversed(binders):
            raised = Pi(_hint(b), self.locals[b], abstract(raised, b))
        self.types[name] = raised
        self.metas[name] = _hint(hint)
        return apply_spine(eta_expand(FVar(name), raised),
                           [eta_expand(FVar(b), self.locals[b]) for b in binders])

    def _bind(self, name: Optional[str], domain: Term) -> str:
        x = fresh_local(name if name and name != "_" else "x")
        self.locals[x] = domain
        return x

    # -- 综合与检查 --------------------------------------------------------

    def synth(self, r: Raw, scope: Dict[str, str], binders: Tuple[str, ...]) -> Tuple[Term, Optional[Term]]:
        if isinstance(r, RType):
            return TYPE, None
        if isinstance(r, RAscribe):
            a = self.check(r.classifier, TYPE, scope, binders)
            head, _ = raw_spine(r.term)
            if (isinstance(head, RIdent) and head is r.term
                    and self._resolve(head, scope) == "implicit" and self.types.get(head.name) is None):
                if any(v in self.locals for v in free_vars(a)):
                    raise ReconstructionAmbiguous(
                        "reconstruct", f"ascribed type of {head.name} mentions a bound variable")
                self.types[head.name] = a
            return self.check(r.term, a, scope, binders), a
        if isinstance(r, RBackArrow):
            concl, cls = self.synth(r.conclusion, scope, binders)
            prem = self.check(r.premise, TYPE, scope, binders)
            return arrow(prem, concl), cls
        if isinstance(r, RPi):
            dom = self.check(r.domain, TYPE, scope, binders)
            x = self._bind(r.name, dom)
            inner = dict(scope)
            if r.name:
                inner[r.name] = x
            body, cls = self.synth(r.body, inner, binders + (x,))
            return Pi(r.name or "_", dom, abstract(body, x)), cls
        if isinstance(r, RLam):
            if r.domain is None:
                line, col = raw_position(r)
                raise ReconstructionAmbiguous(
                    "reconstruct", f"line {line}, column {col}: cannot infer the type of [{r.name}]")
            dom = self.check(r.domain, TYPE, scope, binders)
            x = self._bind(r.name, dom)
            body, ty = self.synth(r.body, {**scope, r.name: x}, binders + (x,))
            if ty is None:
                raise IllTyped("reconstruct", show(body), (), "λ-abstraction over a type")
            return Lam(r.name, abstract(body, x), dom), Pi(r.name, dom, abstract(ty, x))

        head, args = raw_spine(r)
        fn, ty = self._synth_head(head, scope, binders)
        for a in args:
            if not isinstance(ty, Pi):
                raise IllTyped("reconstruct", show(fn), (), "applied to too many arguments")
            m = self.check(a, ty.domain, scope, binders)
            fn = apply_spine(fn, [m])
            ty = instantiate(ty.body, m)
        return fn, ty

    def _synth_head(self, head: Raw, scope: Dict[str, str], binders: Tuple[str, ...]) -> Tuple[Term, Optional[Term]]:
        if not isinstance(head, RIdent):
            return self.synth(head, scope, binders)
        kind = self._resolve(head, scope)
        if kind == "local":
            x = scope[head.name]
            ty = self.locals[x]
            return eta_expand(FVar(x), ty), ty
        if kind == "const":
            decl = self.sig.lookup(head.name)
            ty = decl.classifier
            fn = (eta_expand_family(decl.name, ty) if decl.is_family
                  else eta_expand(Const(decl.name), ty))
            for _ in range(decl.implicit):
                m = self.new_meta(ty.hint, ty.domain, binders)
                fn = apply_spine(fn, [m])
                ty = instantiate(ty.body, m)
            return fn, ty
        if kind == "implicit":
            ty = self.types.get(head.name)
            if ty is None:
                raise ReconstructionAmbiguous(
                    "reconstruct",
                    f"line {head.line}, column {head.column}: cannot infer the type of {head.name}")
            return eta_expand(FVar(head.name), ty), ty
        raise ReconstructionAmbiguous(
            "reconstruct", f"line {head.line}, column {head.column}: _ in a synthesis position")

    def check(self, r: Raw, expected: Term, scope: Dict[str, str], binders: Tuple[str, ...]) -> Term:
        if isinstance(r, RLam) and isinstance(expected, Pi):
            if r.domain is not None:
                dom = self.check(r.domain, TYPE, scope, binders)
                self.equations.append((dom, expected.domain, r))
            x = self._bind(r.name, expected.domain)
            body = self.check(r.body, open_var(expected.body, x), {**scope, r.name: x}, binders + (x,))
            return Lam(r.name, abstract(body, x), expected.domain)
        if isinstance(r, RIdent) and r.name == "_" and r.name not in scope:
            return self.new_meta("X", expected, binders)

        head, args = raw_spine(r)
        if (isinstance(head, RIdent) and self._resolve(head, scope) == "implicit"
                and self.types.get(head.name) is None):
            self._first_use(head, args, expected, scope)

        t, ty = self.synth(r, scope, binders)
        if ty is None:
            raise IllTyped("reconstruct", show(t), (), "a kind where a classifier was expected")
        if ty != expected:
            self.equations.append((ty, expected, r))
        return t

    def _first_use(self, head: RIdent, args: List[Raw], expected: Term, scope: Dict[str, str]) -> None:
        """X y1 … yn（yi 为互异局部变量）的首次出现决定 X 的类型。"""
        ys: List[str] = []
        for a in args:
            if not (isinstance(a, RIdent) and a.name in scope) or scope[a.name] in ys:
                raise ReconstructionAmbiguous(
                    "reconstruct",
                    f"line {head.line}, column {head.column}: first use of {head.name} "
                    f"must be applied to distinct bound variables")
            ys.append(scope[a.name])
        ty = expected
        for y in reversed(ys):
            ty = Pi(_hint(y), self.locals[y], abstract(ty, y))
        if any(v in self.locals for v in free_vars(ty)):
            raise ReconstructionAmbiguous(
                "reconstruct",
                f"line {head.line}, column {head.column}: type of {head.name} depends on a bound variable")
        self.types[head.name] = ty

    # -- 求解与泛化 --------------------------------------------------------

    def solve(self, what: str) -> Dict[str, Obj]:
        if not self.equations:
            return {}
        known = [(n, t) for n, t in self.types.items() if t is not None]
        ctx = Context(tuple(known) + tuple(self.locals.items()))
        metas = tuple(self.metas)
        forbidden = tuple((m, frozenset(self.locals)) for m in metas)
        problem = UnifProblem(tuple((a, b) for a, b, _ in self.equations), ctx, metas, self.sig, forbidden)
        outcome = unify(problem, self.supply)
        if isinstance(outcome, NoSolution):
            a, b, r = self.equations[0]
            line, col = raw_position(r)
            raise IllTyped("reconstruct", what, (), f"line {line}, column {col}: {outcome.reason}")
        if not isinstance(outcome, Mgu):
            raise ReconstructionAmbiguous("reconstruct", f"{what}: {outcome.reason}")
        sol = outcome.subst.as_dict()
        for n, t in outcome.context:
            if n not in self.types:
                self.types[n] = t
                self.metas[n] = "X"
        return sol

    def generalize(self, body: Term, sol: Dict[str, Obj], reserved: Sequence[str]) -> Tuple[Term, List[Tuple[str, Term]]]:
        """把隐式变量和剩余元变量抽象为前导 Π 绑定。"""
        body = subst_fvars(body, sol)
        types = {n: subst_fvars(t, sol) for n, t in self.types.items() if t is not None and n not in sol}
        needed: List[str] = []
        pending = [v for v in free_vars(body) if v in types]
        pending += [n for n in types if n not in self.metas]
        while pending:
            v = pending.pop()
            if v in needed:
                continue
            needed.append(v)
            pending.extend(w for w in free_vars(types[v]) if w in types and w not in needed)
        leaked = [v for v in free_vars(body) if v in self.locals]
        if leaked:
            raise ReconstructionAmbiguous("reconstruct", f"bound variable {leaked[0]} escapes its scope")

        taken = set(reserved) | {n for n in types if n not in self.metas}
        renaming: Dict[str, str] = {}
        for n in types:
            if n in needed and n in self.metas:
                base = self.metas[n] if self.metas[n] not in ("_", "") else "X"
                base = base[0].upper() + base[1:]
                cand, i = base, 0
                while cand in taken:
                    i += 1
                    cand = f"{base}{i}"
                taken.add(cand)
                renaming[n] = cand
        order = [n for n in types if n in needed]
        renamed = {renaming.get(n, n): rename_fvars(types[n], renaming) for n in order}
        names = stable_topological([renaming.get(n, n) for n in order], dict(renamed))
        return rename_fvars(body, renaming), [(n, renamed[n]) for n in names]


def _close(body: Term, binders: Sequence[Tuple[str, Term]]) -> Term:
    for n, a in reversed(binders):
        body = Pi(n, a, abstract(body, n))
    return body


def elaborate_declaration(name: str, raw: Raw, sig: Signature, supply: Optional[NameSupply] = None) -> Decl:
    supply = supply if supply is not None else NameSupply()
    if name in sig:
        line, col = raw_position(raw)
        raise ParseError(f"{name} is already declared", line, col)
    rec = _Reconstructor(sig, supply)
    body, cls = rec.synth(raw, {}, ())
    sol = rec.solve(name)
    body, binders = rec.generalize(body, sol, sig.names() + [name])
    classifier = _close(body, binders)
    is_family = cls is None
    try:
        if is_family:
            check_kind(Context(), sig, classifier)
        else:
            check_family(Context(), sig, classifier, TYPE)
    except IllTyped as e:
        raise IllTyped("reconstruct", name, e.path, e.detail) from e
    decl = Decl(name, classifier, is_family, len(binders))
    logger.debug(f"{name} : {show(classifier)} ({len(binders)} implicit)")
    return decl


# ---------------------------------------------------------------------------
# 源文件
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceFile:
    signature: Signature
    modes: Dict[str, ModedFamily]
    totals: Tuple[Tuple[ModedFamily, TerminationOrder], ...]


def _order_of(item: _TotalItem, mf: ModedFamily) -> TerminationOrder:
    explicit = mf.explicit_names
    if len(item.args) != len(explicit):
        raise ParseError(f"%total {item.family}: expected {len(explicit)} arguments, got {len(item.args)}",
                         item.line, item.column)
    positions = {a: explicit[k] for k, a in enumerate(item.args) if a != "_"}
    kind, names = item.order
    try:
        mapped = tuple(positions[n] for n in names)
    except KeyError as e:
        raise ParseError(f"%total {item.family}: {e.args[0]} is not an argument", item.line, item.column)
    if kind == "subterm":
        return Subterm(mapped[0])
    if kind == "lex":
        return Lex(mapped)
    return Simul(mapped)


def _mark_implicit(sig: Signature, item: _ImplicitItem) -> Signature:
    """%implicit c n：c 的前 n 个 Π 绑定从此按隐式参数处理。"""
    decl = sig.lookup(item.name)
    if decl is None:
        raise ParseError(f"%implicit: {item.name} is not declared", item.line, item.column)
    arity, k = 0, decl.classifier
    while isinstance(k, Pi):
        arity += 1
        k = k.body
    if item.count > arity:
        raise ParseError(f"%implicit {item.name}: only {arity} binder(s)", item.line, item.column)
    return sig.replace(Decl(decl.name, decl.classifier, decl.is_family, item.count))


def parse_source(text: str, supply: Optional[NameSupply] = None) -> SourceFile:
    supply = supply if supply is not None else NameSupply()
    sig = Signature()
    modes: Dict[str, ModedFamily] = {}
    totals: List[Tuple[ModedFamily, TerminationOrder]] = []
    for item in parse_raw(text):
        if isinstance(item, _DeclItem):
            sig = sig.extend(elaborate_declaration(item.name, item.body, sig, supply))
        elif isinstance(item, _ModeItem):
            try:
                modes[item.family] = elaborate_mode(item.family, sig, item.args)
            except ParseError as e:
                raise ParseError(e.detail, item.line, item.column) from None
        elif isinstance(item, _ImplicitItem):
            sig = _mark_implicit(sig, item)
        elif isinstance(item, _TotalItem):
            mf = modes.get(item.family)
            if mf is None:
                raise ParseError(f"%total {item.family} needs a preceding %mode", item.line, item.column)
            totals.append((mf, _order_of(item, mf)))
    logger.info(f"elaborated {len(sig)} declaration(s), {len(totals)} %total")
    return SourceFile(sig, modes, tuple(totals))


def parse_and_elaborate(text: str, supply: Optional[NameSupply] = None
                        ) -> Tuple[Signature, List[Tuple[ModedFamily, TerminationOrder]]]:
    src = parse_source(text, supply)
    return src.signature, list(src.totals)


def parse_goal(text: str, sig: Signature, depth: Optional[int] = None,
               supply: Optional[NameSupply] = None) -> Goal:
    """解析 `D : A`；A 中的大写自由标识符和 _ 为逻辑变量。"""
    supply = supply if supply is not None else NameSupply()
    name, raw = _parse(text, "goal")
    rec = _Reconstructor(sig, supply)
    target = rec.check(raw, TYPE, {}, ())
    sol = rec.solve(name)
    target, binders = rec.generalize(target, sol, sig.names())
    if not isinstance(target, Atom) and not isinstance(target, Pi):
        raise IllTyped("goal", show(target), (), "not a type")
    return Goal(target, Context(tuple(binders)), DEFAULT_DEPTH if depth is None else depth, name)


def print_signature(sig: Signature) -> str:
    """
    以显式形式打印签名：隐式参数写成前导 {X:A}。

    隐式参数个数放在末尾的 %implicit 指令里，重新解析时得到同一个签名。
    """
    lines = [f"{d.name} : {show(d.classifier)}.\n" for d in sig]
    lines += [f"%implicit {d.name} {d.implicit}.\n" for d in sig if d.implicit]
    return "".join(lines)
