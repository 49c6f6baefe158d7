"""
Tests for certificate and trace files.

This module is part of the LF Totality Checker project.
"""

# test_certificates.py
import dataclasses
import subprocess
import sys
from pathlib import Path

import pytest

from certificates import Theorem, check_statement, digest, print_certificate, read_certificate, verify
from config import CheckerConfig
from conftest import load
from errors import CaseNotExhaustive, MalformedCertificate, ProofCheckError, VersionMismatch
from lf_core import Context
from m2_logic import Formula
from proofgen import generate
from terms import fresh_local
from totality import TotalityChecker
from traces import FamilyTraces, print_traces, read_traces


@pytest.fixture(scope="module")
def subred_theorem(subred_src, subred_report):
    return Theorem("subred", subred_report.order, generate(subred_report, subred_src.signature))


@pytest.fixture(scope="module")
def plus_theorem(plus_src, plus_report):
    return Theorem("plus", plus_report.order, generate(plus_report, plus_src.signature))


def test_header_and_record(plus_theorem):
    text = print_certificate([plus_theorem])
    assert text.startswith("m2proof/1\n(theorem plus N1\n  (rec IH (formula ")
    assert text.endswith(")\n")


@pytest.mark.parametrize("which", ["plus", "subred"])
def test_round_trip_is_byte_exact(which, plus_src, subred_src, plus_theorem, subred_theorem):
    sig, th = (plus_src.signature, plus_theorem) if which == "plus" else (subred_src.signature, subred_theorem)
    text = print_certificate([th])
    again = read_certificate(text, sig)
    assert print_certificate(again) == text
    assert again[0].order == th.order


def test_read_certificate_verifies(subred_src, subred_theorem):
    text = print_certificate([subred_theorem])
    verify(read_certificate(text, subred_src.signature), subred_src.signature)


def test_verify_rejects_deleted_case(subred_src, subred_theorem):
    proof = subred_theorem.proof
    case = proof.body.body
    cut = dataclasses.replace(case, branches=case.branches[:1])
    broken = dataclasses.replace(proof, body=dataclasses.replace(proof.body, body=cut))
    text = print_certificate([dataclasses.replace(subred_theorem, proof=broken)])
    with pytest.raises(CaseNotExhaustive):
        verify(read_certificate(text, subred_src.signature), subred_src.signature)


def test_statement_must_be_the_family(plus_src, plus_theorem):
    proof = plus_theorem.proof
    weaker = dataclasses.replace(proof, formula=Formula(proof.formula.forall, Context()))
    with pytest.raises(ProofCheckError):
        check_statement(dataclasses.replace(plus_theorem, proof=weaker), plus_src.signature)


@pytest.mark.parametrize("text, error", [
    ("", MalformedCertificate),
    ("   \n", MalformedCertificate),
    ("m2proof/2\n", VersionMismatch),
    ("hello\n", MalformedCertificate),
    ("m2proof/1\n(theorem plus N1 (witness ())", MalformedCertificate),
])
def test_bad_certificates(plus_src, text, error):
    with pytest.raises(error):
        read_certificate(text, plus_src.signature)


def test_empty_certificate_body_is_accepted(plus_src):
    assert read_certificate("m2proof/1\n", plus_src.signature) == []


def test_digest_is_stable(plus_theorem):
    text = print_certificate([plus_theorem])
    assert digest(text) == digest(print_certificate([plus_theorem]))
    assert len(digest(text)) == 64
    assert digest(text) != digest(text + " ")


def _traces(report):
    return [FamilyTraces(report.family, report.input_trace,
                         tuple((c, i, t) for (c, i), t in report.output_traces.items()))]


@pytest.mark.parametrize("which", ["plus", "subred"])
def test_trace_round_trip(which, plus_src, subred_src, plus_report, subred_report):
    src, report = (plus_src, plus_report) if which == "plus" else (subred_src, subred_report)
    text = print_traces(_traces(report))
    assert text.startswith("covtrace/1\n(family ")
    again = read_traces(text, src.signature)
    assert print_traces(again) == text
    assert again[0].input_trace == report.input_trace


def test_trace_version_mismatch(plus_src):
    with pytest.raises(VersionMismatch):
        read_traces("covtrace/9\n", plus_src.signature)


def test_checker_does_not_import_the_generator():
    root = Path(__file__).parent
    code = "import sys, certificates; print(' '.join(sorted(sys.modules)))"
    out = subprocess.run([sys.executable, "-c", code], cwd=root, capture_output=True, text=True, check=True)
    loaded = out.stdout.split()
    for name in ("proofgen", "totality", "coverage", "traces"):
        assert name not in loaded


def test_certificate_text_does_not_depend_on_earlier_work():
    def once():
        src = load("subred.elf")
        [report] = TotalityChecker(CheckerConfig(), src.signature).check_all(src.totals)
        return print_certificate([Theorem("subred", report.order, generate(report, src.signature))])

    first = once()
    for _ in range(17):
        fresh_local("x")
    assert once() == first
