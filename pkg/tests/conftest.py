from pathlib import Path

import pytest

from discoref.corpus_io import parse_conll
from discoref.rst_tree import binarize, parse_rst

FIXTURES = Path(__file__).parent / "fixtures"


def read_fixture(name):
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def t1_doc():
    """20 tokens; sentence 0 = tokens [0,9), sentence 1 = [9,20).

    Mentions: 0=[1,3) 1=[4,7) 2=[10,12) 3=[15,17); chains {0,3} {1} {2}.
    """
    return parse_conll(read_fixture("t1.conll"))[0]


@pytest.fixture
def t1_tree(t1_doc):
    return binarize(parse_rst(read_fixture("t1.rst"), t1_doc))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
