from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import strategies as st

from structriage.doc_model import NodeKind, StructureNode, build_index, loads_tree

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def walk_json(node: dict):
    """Pre-order walk over the raw fixture JSON, independent of the library's tree type."""
    yield node
    for child in node.get("children", []):
        yield from walk_json(child)


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def minidoc_raw() -> dict:
    return json.loads((FIXTURES / "minidoc.json").read_text())


@pytest.fixture
def minidoc_tree():
    return loads_tree((FIXTURES / "minidoc.json").read_text())


@pytest.fixture
def minidoc(minidoc_tree):
    return build_index(minidoc_tree)


_text = st.text(alphabet="abc xyz\"\\é", max_size=20)


@st.composite
def trees(draw, depth=0, lo=1, hi=6, counter=None):
    counter = counter if counter is not None else [0]
    counter[0] += 1
    start = draw(st.integers(lo, hi))
    end = draw(st.integers(start, hi))
    kind = NodeKind.SECTION if depth == 0 else draw(
        st.sampled_from([NodeKind.SECTION, NodeKind.PARAGRAPH, NodeKind.TABLE, NodeKind.FIGURE]))
    node = StructureNode(
        f"n{counter[0]}", kind, start, end,
        title=(draw(_text) or "t") if kind is NodeKind.SECTION else None,
        level=depth + 1 if kind is NodeKind.SECTION else None,
        text=draw(_text),
        rows=[["h"], [draw(_text)]] if kind is NodeKind.TABLE else None,
    )
    if kind is NodeKind.SECTION and depth < 3:
        for _ in range(draw(st.integers(0, 3))):
            node.children.append(draw(trees(depth + 1, start, end, counter)))
    return node


def pytest_terminal_summary(terminalreporter):
    from criteria import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
