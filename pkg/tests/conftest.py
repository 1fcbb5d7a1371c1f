import json

import pytest

from histdr.corpus import Passage, Session, Turn


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    return path


@pytest.fixture
def small_collection():
    return {
        "p1": Passage("p1", "the cat sat on the mat"),
        "p2": Passage("p2", "dogs chase cats in the park"),
        "p3": Passage("p3", "a recipe for apple pie"),
    }


@pytest.fixture
def small_sessions():
    return [
        Session("s1", (Turn(1, "cat mat", "p1"), Turn(2, "dogs park", "p2"),
                       Turn(3, "apple pie", "p3"))),
        Session("s2", (Turn(1, "where do dogs play", "p2"), Turn(2, "and cats", None))),
    ]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
