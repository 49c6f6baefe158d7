"""
Totality module.

This module is part of the LF Totality Checker project.
"""

# totality.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from config import CheckerConfig
from coverage import SplittingTrace, check_input_coverage, check_output_coverage
from errors import LFError
from lf_core import Signature, check_signature
from lp_engine import Clause, clauses_for
from modes import ModedFamily, check_mode_consistency, check_output_freshness
from termination import TerminationOrder, check_termination
from unify import NameSupply

logger = logging.getLogger(__name__)


@dataclass
class TotalityReport:
    mode: ModedFamily
    order: TerminationOrder
    clauses: List[Clause] = field(default_factory=list)
    input_trace: Optional[SplittingTrace] = None
    output_traces: Dict[Tuple[str, int], SplittingTrace] = field(default_factory=dict)
    passed: List[str] = field(default_factory=list)

    @property
    def family(self) -> str:
        return self.mode.family


class TotalityChecker:
    """依次运行模式、终止、输入覆盖与输出覆盖四项检查，并记录分裂轨迹。"""

    def __init__(self, config: CheckerConfig, sig: Signature, supply: Optional[NameSupply] = None):
        self.config = config
        self.sig = sig
        self.supply = supply if supply is not None else NameSupply()

    def check_signature(self) -> None:
        check_signature(self.sig)
        logger.info(f"signature with {len(self.sig)} declarations is well-typed")

    def check(self, mf: ModedFamily, order: TerminationOrder) -> TotalityReport:
        report = TotalityReport(mf, order, clauses_for(self.sig, mf.family))
        try:
            for cl in report.clauses:
                check_mode_consistency(cl, mf)
            report.passed.append("mode")

            check_termination(mf, report.clauses, order)
            report.passed.append("termination")

            report.input_trace = check_input_coverage(mf, self.sig, self.config.split_budget, self.supply)
            report.passed.append("input-coverage")

            for cl in report.clauses:
                check_output_freshness(cl, mf, self.sig)
                for i in range(1, len(cl.premises) + 1):
                    report.output_traces[(cl.const, i)] = check_output_coverage(
                        cl, i, mf, self.sig, self.config.split_budget, self.supply)
            report.passed.append("output-coverage")
        except LFError as e:
            logger.error(f"%total {order} ({mf.family}) failed: {e}")
            raise
        logger.info(f"{mf.family} is total in {order}")
        return report

    def check_all(self, directives: Sequence[Tuple[ModedFamily, TerminationOrder]]) -> List[TotalityReport]:
        return [self.check(mf, order) for mf, order in directives]
