"""
Config module.

This module is part of the LF Totality Checker project.
"""

# config.py
import logging
import os


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value else default


class CheckerConfig:
    def __init__(self):
        self.solve_depth = _env_int("LFCHECK_SOLVE_DEPTH", 10_000)
        self.split_budget = _env_int("LFCHECK_SPLIT_BUDGET", 200)
        self.log_file = os.getenv("LFCHECK_LOG_FILE", "lfcheck.log")
        self.log_level = logging.INFO

        # 输出文件的格式版本
        self.certificate_version = "m2proof/1"
        self.trace_version = "covtrace/1"
        self.json_schema = "lfcheck-diag/1"
