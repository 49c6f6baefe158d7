"""
Errors module.

This module is part of the LF Totality Checker project.
"""

# errors.py
from typing import Optional, Sequence, Tuple

CHECK_FAILED = 1
USAGE_ERROR = 2


class LFError(Exception):
    """所有检查错误的基类：rule 为失败的判断或检查名，detail 为可读说明。"""

    exit_code = CHECK_FAILED

    def __init__(self, rule: str, detail: str = ""):
        self.rule = rule
        self.detail = detail
        super().__init__(f"{rule}: {detail}" if detail else rule)

    def to_dict(self) -> dict:
        return {"class": type(self).__name__, "rule": self.rule, "detail": self.detail}


# lf-core

class IllTyped(LFError):
    def __init__(self, rule: str, subterm: str, path: Sequence[int] = (), detail: str = ""):
        self.subterm = subterm
        self.path: Tuple[int, ...] = tuple(path)
        where = "/".join(str(i) for i in self.path) or "."
        super().__init__(rule, f"{detail} at {where}: {subterm}".strip())


# unify / lp-engine

class UnificationUndecided(LFError):
    pass


class BudgetExhausted(LFError):
    pass


# totality

class IllDefinedMode(LFError):
    def __init__(self, family: str, param: str, depends_on: str):
        self.family = family
        self.param = param
        self.depends_on = depends_on
        super().__init__("mode-well-defined",
                         f"{family}: input {param} depends on output {depends_on}")


class ModeError(LFError):
    def __init__(self, clause: str, premise: Optional[int], variable: str, detail: str = ""):
        self.clause = clause
        self.premise = premise
        self.variable = variable
        where = "head" if premise is None else f"premise {premise}"
        super().__init__("mode-consistency",
                         f"{clause}: {where}: variable {variable} is not ground {detail}".rstrip())


class TerminationError(LFError):
    def __init__(self, clause: str, premise: int, argument: str, detail: str = ""):
        self.clause = clause
        self.premise = premise
        self.argument = argument
        super().__init__("termination", f"{clause}: premise {premise}: argument {argument} {detail}".rstrip())


class CoverageFailure(LFError):
    def __init__(self, goal: str, detail: str = "", trace=None):
        self.goal = goal
        self.trace = trace
        super().__init__("input-coverage", f"{detail}: {goal}" if detail else goal)


class SplitUndecided(LFError):
    pass


class FunctionTypeSplit(LFError):
    pass


class FreshnessError(LFError):
    def __init__(self, clause: str, premise: int, variable: str):
        self.clause = clause
        self.premise = premise
        self.variable = variable
        super().__init__("output-freshness",
                         f"{clause}: premise {premise}: {variable} is both input and output")


class OutputCoverageFailure(LFError):
    def __init__(self, clause: str, premise: int, goal: str, trace=None):
        self.clause = clause
        self.premise = premise
        self.goal = goal
        self.trace = trace
        super().__init__("output-coverage", f"{clause}: premise {premise}: uncovered {goal}")


class NotMatchable(LFError):
    pass


# m2-logic

class ProofCheckError(LFError):
    pass


class CaseNotExhaustive(ProofCheckError):
    pass


class CaseMguMismatch(ProofCheckError):
    pass


class NonTerminatingRec(ProofCheckError):
    pass


class ScopeError(ProofCheckError):
    pass


class FuelExhausted(LFError):
    pass


class NoCaseMatches(LFError):
    pass


# proofgen

class InstantiationBroken(LFError):
    pass


class TraceMismatch(LFError):
    pass


# cli-frontend

class ParseError(LFError):
    exit_code = USAGE_ERROR

    def __init__(self, detail: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__("parse", f"line {line}, column {column}: {detail}")


class ReconstructionAmbiguous(LFError):
    exit_code = USAGE_ERROR


class VersionMismatch(LFError):
    exit_code = USAGE_ERROR


class MalformedCertificate(LFError):
    exit_code = USAGE_ERROR
