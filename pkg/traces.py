"""
Traces module.

This module is part of the LF Totality Checker project.
"""

# traces.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from lark import Lark

from certificates import read_versioned, resolve_term
from coverage import CoveredLeaf, FailureLeaf, SplitChild, SplitNode, SplittingTrace
from lf_core import Signature, Substitution
from twelf_parser import TERM_GRAMMAR, ToRaw

logger = logging.getLogger(__name__)

TRACE_VERSION = "covtrace/1"

TRACE_GRAMMAR = r"""
start: family*

family: "(family" NAME input_trace output_trace* ")"
input_trace: "(input" trace ")"
output_trace: "(output" NAME NAME trace ")"

?trace: "(split" NAME child* ")"       -> split_node
      | "(covered" NAME subst ")"      -> covered
      | "(uncovered" ")"               -> uncovered

child: "(" NAME subst trace ")"

subst: "(" binding* ")"
binding: arg "/" NAME
"""

_trace_parser = Lark(TRACE_GRAMMAR + TERM_GRAMMAR, parser="lalr")


@dataclass(frozen=True)
class FamilyTraces:
    """一个族的输入覆盖轨迹，以及每个 (子句, 前提) 的输出覆盖轨迹。"""
    family: str
    input_trace: SplittingTrace
    output_traces: Tuple[Tuple[str, int, SplittingTrace], ...] = ()


def _print_trace(t: SplittingTrace, indent: int, out: List[str]) -> None:
    pad = "  " * indent
    if isinstance(t, SplitNode):
        out.append(f"{pad}(split {t.var}")
        for child in t.children:
            out.append(f"{pad}  ({child.const} {child.mgu}")
            _print_trace(child.subtree, indent + 2, out)
            out[-1] += ")"
        out[-1] += ")"
    elif isinstance(t, CoveredLeaf):
        out.append(f"{pad}(covered {t.pattern} {t.subst})")
    elif isinstance(t, FailureLeaf):
        out.append(f"{pad}(uncovered)")
    else:
        raise TypeError(f"not a splitting trace: {t!r}")


def print_traces(families: Sequence[FamilyTraces], version: str = TRACE_VERSION) -> str:
    lines = [version]
    for fam in families:
        lines.append(f"(family {fam.family}")
        lines.append("  (input")
        _print_trace(fam.input_trace, 2, lines)
        lines[-1] += ")"
        for const, i, trace in fam.output_traces:
            lines.append(f"  (output {const} {i}")
            _print_trace(trace, 2, lines)
            lines[-1] += ")"
        lines[-1] += ")"
    return "\n".join(lines) + "\n"


class _TraceReader(ToRaw):
    def __init__(self, sig: Signature):
        super().__init__()
        self.sig = sig

    def binding(self, children):
        m, name = children
        return str(name), resolve_term(m, self.sig)

    def subst(self, children):
        return Substitution(tuple(children))

    def child(self, children):
        const, mgu, subtree = children
        return SplitChild(str(const), mgu, subtree)

    def split_node(self, children):
        var, *kids = children
        return SplitNode(str(var), tuple(kids))

    def covered(self, children):
        ident, s = children
        return CoveredLeaf(str(ident), s)

    def uncovered(self, children):
        return FailureLeaf("")

    def input_trace(self, children):
        return children[0]

    def output_trace(self, children):
        const, i, trace = children
        return str(const), int(i), trace

    def family(self, children):
        name, inp, *outs = children
        return FamilyTraces(str(name), inp, tuple(outs))

    def start(self, children):
        return list(children)


def read_traces(text: str, sig: Signature, version: str = TRACE_VERSION) -> List[FamilyTraces]:
    families = read_versioned(_trace_parser, _TraceReader(sig), text, version)
    logger.debug(f"read traces for {len(families)} famil{'y' if len(families) == 1 else 'ies'}")
    return families
