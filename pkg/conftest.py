"""
Shared pytest fixtures.

This module is part of the LF Totality Checker project.
"""

# conftest.py
import os

import pytest

from config import CheckerConfig
from twelf_parser import parse_source

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def load(name: str):
    with open(fixture_path(name), encoding="utf-8") as f:
        return parse_source(f.read())


@pytest.fixture(autouse=True)
def _log_file(tmp_path, monkeypatch):
    # 日志写到临时目录
    monkeypatch.setenv("LFCHECK_LOG_FILE", str(tmp_path / "lfcheck.log"))


@pytest.fixture
def config():
    return CheckerConfig()


@pytest.fixture(scope="session")
def plus_src():
    return load("plus.elf")


@pytest.fixture(scope="session")
def subred_src():
    return load("subred.elf")


@pytest.fixture(scope="session")
def eval_src():
    return load("eval.elf")


def _report(src):
    from totality import TotalityChecker

    checker = TotalityChecker(CheckerConfig(), src.signature)
    [report] = checker.check_all(src.totals)
    return report


@pytest.fixture(scope="session")
def plus_report(plus_src):
    return _report(plus_src)


@pytest.fixture(scope="session")
def subred_report(subred_src):
    return _report(subred_src)
