"""
Certificates module.

This module is part of the LF Totality Checker project.
"""

# certificates.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

from cryptography.hazmat.primitives import hashes
from lark import Lark
from lark.exceptions import UnexpectedInput, VisitError

from errors import LFError, MalformedCertificate, ProofCheckError, VersionMismatch
from lf_core import Context, Signature, Substitution
from m2_logic import (
    AllIntro, Case, CaseBranch, Formula, Let, Pattern, ProofTerm, Rec, Sequent, Split, Witness,
    check_proof,
)
from termination import Lex, Simul, Subterm, TerminationOrder
from terms import (
    Atom, BVar, Const, FVar, Lam, Pi, RApp, RIdent, RLam, RPi, RType, Root, Term, TYPE, Raw,
    free_vars, raw_spine, show,
)
from twelf_parser import TERM_GRAMMAR, RBackArrow, ToRaw

logger = logging.getLogger(__name__)

CERTIFICATE_VERSION = "m2proof/1"

CERT_GRAMMAR = r"""
start: theorem*

theorem: "(theorem" NAME order proof ")"

order: NAME                 -> subterm_order
     | "{" NAME+ "}"        -> lex_order
     | "[" NAME+ "]"        -> simul_order

?proof: "(rec" NAME formula proof ")"                  -> rec
      | "(all" ctx proof ")"                           -> all_intro
      | "(let" "(" NAME "(" NAME subst ")" ")" proof ")"  -> let
      | "(split" NAME ctx proof ")"                    -> split
      | "(witness" subst ")"                           -> witness
      | "(case" NAME branch* ")"                       -> case

formula: "(formula" ctx ctx ")"
branch: "(" "(pat" ctx ctx term ")" proof ")"

ctx: "(" entry* ")"
entry: "{" NAME ":" term "}"
subst: "(" binding* ")"
binding: arg "/" NAME
"""

_cert_parser = Lark(CERT_GRAMMAR + TERM_GRAMMAR, parser="lalr")


@dataclass(frozen=True)
class Theorem:
    """一条 %total 的证明：族名、终止序和 rec 证明项。"""
    family: str
    order: TerminationOrder
    proof: Rec


# ---------------------------------------------------------------------------
# 打印
# ---------------------------------------------------------------------------

def _ctx(c: Context) -> str:
    return "(" + " ".join(f"{{{n}:{show(a)}}}" for n, a in c) + ")"


def _subst(s: Substitution) -> str:
    return str(s)


def _formula(f: Formula) -> str:
    return f"(formula {_ctx(f.forall)} {_ctx(f.exists)})"


def _print_proof(p: ProofTerm, indent: int, out: List[str]) -> None:
    pad = "  " * indent
    if isinstance(p, Rec):
        out.append(f"{pad}(rec {p.name} {_formula(p.formula)}")
        _print_proof(p.body, indent + 1, out)
        out[-1] += ")"
    elif isinstance(p, AllIntro):
        out.append(f"{pad}(all {_ctx(p.ctx)}")
        _print_proof(p.body, indent + 1, out)
        out[-1] += ")"
    elif isinstance(p, Let):
        out.append(f"{pad}(let ({p.name} ({p.assumption} {_subst(p.subst)}))")
        _print_proof(p.body, indent + 1, out)
        out[-1] += ")"
    elif isinstance(p, Split):
        out.append(f"{pad}(split {p.assumption} {_ctx(p.ctx)}")
        _print_proof(p.body, indent + 1, out)
        out[-1] += ")"
    elif isinstance(p, Witness):
        out.append(f"{pad}(witness {_subst(p.subst)})")
    elif isinstance(p, Case):
        out.append(f"{pad}(case {p.var}")
        for br in p.branches:
            pat = br.pattern
            out.append(f"{pad}  ((pat {_ctx(pat.ctx1)} {_ctx(pat.ctx2)} {show(pat.term)})")
            _print_proof(br.body, indent + 2, out)
            out[-1] += ")"
        out[-1] += ")"
    else:
        raise TypeError(f"not a proof term: {p!r}")


def print_proof(p: ProofTerm) -> str:
    out: List[str] = []
    _print_proof(p, 0, out)
    return "\n".join(out)


def print_certificate(theorems: Sequence[Theorem], version: str = CERTIFICATE_VERSION) -> str:
    lines = [version]
    for th in theorems:
        lines.append(f"(theorem {th.family} {th.order}")
        body: List[str] = []
        _print_proof(th.proof, 1, body)
        body[-1] += ")"
        lines.extend(body)
    return "\n".join(lines) + "\n"


def digest(text: str) -> str:
    """证书文本的 SHA-256 十六进制摘要。"""
    h = hashes.Hash(hashes.SHA256())
    h.update(text.encode("utf-8"))
    return h.finalize().hex()


# ---------------------------------------------------------------------------
# 读取：只做语法解析，类型留给检查器
# ---------------------------------------------------------------------------

def resolve_term(r: Raw, sig: Signature, bound: Sequence[str] = ()) -> Term:
    """λ/Π 绑定的名字为 BVar，签名常量为 Const 或类型族，其余为自由变量。"""
    if isinstance(r, RType):
        return TYPE
    if isinstance(r, RPi):
        name = r.name or "_"
        return Pi(name, resolve_term(r.domain, sig, bound),
                  resolve_term(r.body, sig, list(bound) + [name]))
    if isinstance(r, RBackArrow):
        return Pi("_", resolve_term(r.premise, sig, bound),
                  resolve_term(r.conclusion, sig, list(bound) + ["_"]))
    if isinstance(r, RLam):
        dom = resolve_term(r.domain, sig, bound) if r.domain is not None else None
        return Lam(r.name, resolve_term(r.body, sig, list(bound) + [r.name]), dom)
    head, args = raw_spine(r)
    if not isinstance(head, RIdent):
        raise MalformedCertificate("read", "application of a non-identifier")
    spine = tuple(resolve_term(a, sig, bound) for a in args)
    name = head.name
    if name in bound:
        return Root(BVar(list(reversed(bound)).index(name)), spine)
    decl = sig.lookup(name)
    if decl is not None:
        return Atom(name, spine) if decl.is_family else Root(Const(name), spine)
    return Root(FVar(name), spine)


class _CertReader(ToRaw):
    """把证书语法树转换为证明项。"""

    def __init__(self, sig: Signature):
        super().__init__()
        self.sig = sig

    def _term(self, raw: Raw) -> Term:
        return resolve_term(raw, self.sig)

    def entry(self, children):
        name, ty = children
        return str(name), self._term(ty)

    def ctx(self, children):
        return Context(tuple(children))

    def binding(self, children):
        m, name = children
        return str(name), self._term(m)

    def subst(self, children):
        return Substitution(tuple(children))

    def formula(self, children):
        return Formula(children[0], children[1])

    def rec(self, children):
        name, f, body = children
        return Rec(str(name), f, body)

    def all_intro(self, children):
        return AllIntro(children[0], children[1])

    def let(self, children):
        y, x, s, body = children
        return Let(str(y), str(x), s, body)

    def split(self, children):
        x, c, body = children
        return Split(str(x), c, body)

    def witness(self, children):
        return Witness(children[0])

    def branch(self, children):
        c1, c2, term, body = children
        return CaseBranch(Pattern(c1, c2, self._term(term)), body)

    def case(self, children):
        x, *branches = children
        return Case(str(x), tuple(branches))

    def theorem(self, children):
        fam, order, proof = children
        if not isinstance(proof, Rec):
            raise MalformedCertificate("read", f"theorem {fam} does not start with rec")
        kind, names = order
        order_value = Subterm(names[0]) if kind == "subterm" else (Lex(names) if kind == "lex" else Simul(names))
        return Theorem(str(fam), order_value, proof)

    def start(self, children):
        return list(children)


def _split_header(text: str, version: str) -> str:
    if not text.strip():
        raise MalformedCertificate("read", "empty file")
    first, _, rest = text.partition("\n")
    head = first.strip()
    family = version.split("/")[0] + "/"
    if head.startswith(family) and head != version:
        raise VersionMismatch("read", f"expected {version}, found {head}")
    if head != version:
        raise MalformedCertificate("read", f"missing {version} header")
    return "\n" + rest


def read_versioned(parser: Lark, reader, text: str, version: str):
    body = _split_header(text, version)
    try:
        return reader.transform(parser.parse(body))
    except UnexpectedInput as e:
        raise MalformedCertificate("read", f"line {getattr(e, 'line', 0)}, "
                                           f"column {getattr(e, 'column', 0)}: unexpected input") from e
    except VisitError as e:
        if isinstance(e.orig_exc, LFError):
            raise e.orig_exc from None
        raise MalformedCertificate("read", str(e.orig_exc)) from e


def read_certificate(text: str, sig: Signature, version: str = CERTIFICATE_VERSION) -> List[Theorem]:
    theorems = read_versioned(_cert_parser, _CertReader(sig), text, version)
    logger.debug(f"read {len(theorems)} theorem(s)")
    return theorems



# ---------------------------------------------------------------------------
# 独立验证
# ---------------------------------------------------------------------------

def check_statement(th: Theorem, sig: Signature) -> None:
    """公式的最后一个 ∃ 绑定必须是 a 作用于互异变量，且这些变量恰好覆盖其余绑定。"""
    f = th.proof.formula
    decl = sig.lookup(th.family)
    if decl is None or not decl.is_family:
        raise ProofCheckError("statement", f"{th.family} is not a type family")
    if not f.exists:
        raise ProofCheckError("statement", "formula has no derivation binder")
    _, last = f.exists.entries[-1]
    others = f.forall.names() + f.exists.names()[:-1]
    if not isinstance(last, Atom) or last.const != th.family:
        raise ProofCheckError("statement", f"last binder is not a derivation of {th.family}")
    args = []
    for m in last.spine:
        vs = free_vars(m)
        head = m
        while isinstance(head, Lam):
            head = head.body
        if not (isinstance(head, Root) and isinstance(head.head, FVar) and vs == [head.head.name]):
            raise ProofCheckError("statement", f"argument {show(m)} is not a variable")
        args.append(head.head.name)
    if len(set(args)) != len(args) or set(args) != set(others):
        raise ProofCheckError("statement", "family arguments do not match the quantified variables")
    for n in th.order.names:
        if n not in f.forall.names():
            raise ProofCheckError("statement", f"termination argument {n} is not universally quantified")


def verify(theorems: Sequence[Theorem], sig: Signature) -> None:
    for th in theorems:
        check_statement(th, sig)
        check_proof(Sequent(Context(), (), th.proof.formula, th.proof), sig, th.order)
        logger.info(f"certificate for {th.family} accepted")
