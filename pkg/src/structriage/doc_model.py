"""Document structure tree, the lookup index over it, and the metadata prompt."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Iterator, Mapping

from .errors import DuplicateId, InvalidNode, InvalidPageRange, PageOutOfRange
from .retrieval import TokenCounter, count_tokens


class NodeKind(str, enum.Enum):
    SECTION = "section"
    HEADING = "heading"
    PARAGRAPH = "paragraph"
    TABLE = "table"
    FIGURE = "figure"
    CAPTION = "caption"
    LIST_ITEM = "list_item"
    OTHER = "other"


@dataclass
class StructureNode:
    """One element of the document tree.

    For tables and figures ``text`` holds the caption; table cells live in
    ``rows`` (first row is the header).
    """

    id: str
    kind: NodeKind
    page_start: int = 1
    page_end: int = 1
    title: str | None = None
    level: int | None = None
    text: str = ""
    rows: list[list[str]] | None = None
    children: list[StructureNode] = field(default_factory=list)

    def __post_init__(self):
        self.kind = NodeKind(self.kind)
        if self.page_start < 1 or self.page_end < self.page_start:
            raise InvalidPageRange(
                f"node {self.id!r}: bad page range {self.page_start}-{self.page_end}"
            )
        if self.level is not None and self.level < 0:
            raise InvalidNode(f"node {self.id!r}: negative level")
        if self.kind is NodeKind.SECTION and self.title is None:
            raise InvalidNode(f"section {self.id!r} has no title")

    def walk(self) -> Iterator[StructureNode]:
        """Pre-order traversal (document order)."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def spans(self, page: int) -> bool:
        return self.page_start <= page <= self.page_end

    # -- canonical tree JSON ------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "kind": self.kind.value}
        if self.title is not None:
            d["title"] = self.title
        if self.level is not None:
            d["level"] = self.level
        d["page_start"] = self.page_start
        d["page_end"] = self.page_end
        d["text"] = self.text
        if self.rows is not None:
            d["rows"] = [list(r) for r in self.rows]
        d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> StructureNode:
        try:
            return cls(
                id=str(d["id"]),
                kind=NodeKind(d["kind"]),
                page_start=int(d["page_start"]),
                page_end=int(d["page_end"]),
                title=d.get("title"),
                level=d.get("level"),
                text=d.get("text", ""),
                rows=[list(map(str, r)) for r in d["rows"]] if d.get("rows") is not None else None,
                children=[cls.from_dict(c) for c in d.get("children", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidNode(f"bad tree node {d.get('id', '?') if isinstance(d, Mapping) else d!r}: {exc}") from exc


def dumps_tree(root: StructureNode) -> str:
    return json.dumps(root.to_dict(), indent=2, ensure_ascii=False) + "\n"


def loads_tree(raw: str | bytes) -> StructureNode:
    return StructureNode.from_dict(json.loads(raw))


# --- markdown rendering ---------------------------------------------------

def table_markdown(rows: list[list[str]] | None) -> str:
    if not rows:
        return ""
    width = max(len(r) for r in rows)
    padded = [list(r) + [""] * (width - len(r)) for r in rows]
    lines = ["| " + " | ".join(c.replace("|", "\\|") for c in padded[0]) + " |"]
    lines.append("|" + "---|" * width)
    for r in padded[1:]:
        lines.append("| " + " | ".join(c.replace("|", "\\|") for c in r) + " |")
    return "\n".join(lines)


def heading_line(title: str, level: int | None) -> str:
    return "#" * max(level or 1, 1) + " " + title


def node_content(node: StructureNode, table_body: bool = True) -> str:
    """Markdown for a node's own content, children excluded.

    Sections contribute nothing here: their titles belong to the skeleton,
    not to page text.
    """
    if node.kind is NodeKind.SECTION:
        return node.text
    if node.kind is NodeKind.HEADING:
        return heading_line(node.text, node.level) if node.text else ""
    if node.kind is NodeKind.LIST_ITEM:
        return f"- {node.text}" if node.text else ""
    if node.kind is NodeKind.TABLE and table_body:
        body = table_markdown(node.rows)
        return "\n\n".join(p for p in (node.text, body) if p)
    return node.text


def to_markdown(root: StructureNode) -> str:
    """Whole tree as markdown, section titles rendered as headings."""
    parts = []
    for node in root.walk():
        if node.kind is NodeKind.SECTION:
            parts.append(heading_line(node.title or "", node.level))
        content = node_content(node)
        if content:
            parts.append(content)
    return "\n\n".join(parts)


# --- index ----------------------------------------------------------------

@dataclass(frozen=True)
class DocumentIndex:
    root: StructureNode
    by_section: Mapping[str, StructureNode]
    by_page: Mapping[int, tuple[StructureNode, ...]]
    tables: tuple[StructureNode, ...]
    figures: tuple[StructureNode, ...]
    page_count: int
    nodes: Mapping[str, StructureNode] = field(repr=False)

    @property
    def table_ids(self) -> dict[str, StructureNode]:
        return {t.id: t for t in self.tables}

    @property
    def figure_ids(self) -> dict[str, StructureNode]:
        return {f.id: f for f in self.figures}

    @property
    def title(self) -> str | None:
        return self.root.title

    def content_nodes(self) -> list[StructureNode]:
        """Every non-section node, in document order."""
        return [n for n in self.root.walk() if n.kind is not NodeKind.SECTION]


def build_index(root: StructureNode) -> DocumentIndex:
    seen: dict[str, StructureNode] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in seen:
            raise DuplicateId(node.id)
        seen[node.id] = node
        for child in node.children:
            if child.page_start < node.page_start or child.page_end > node.page_end:
                raise InvalidPageRange(
                    f"node {child.id!r} (pages {child.page_start}-{child.page_end}) lies outside "
                    f"parent {node.id!r} (pages {node.page_start}-{node.page_end})"
                )
        stack.extend(reversed(node.children))

    order = list(root.walk())
    page_count = max(n.page_end for n in order)
    by_section = {n.id: n for n in order if n.kind is NodeKind.SECTION}
    tables = tuple(n for n in order if n.kind is NodeKind.TABLE)
    figures = tuple(n for n in order if n.kind is NodeKind.FIGURE)
    pages: dict[int, list[StructureNode]] = {p: [] for p in range(1, page_count + 1)}
    for n in order:
        if n.kind is NodeKind.SECTION:
            continue
        for p in range(n.page_start, n.page_end + 1):
            pages[p].append(n)
    return DocumentIndex(
        root=root,
        by_section=MappingProxyType(by_section),
        by_page=MappingProxyType({p: tuple(v) for p, v in pages.items()}),
        tables=tables,
        figures=figures,
        page_count=page_count,
        nodes=MappingProxyType(seen),
    )


def page_text(index: DocumentIndex, page: int, table_body: bool = True) -> str:
    if not 1 <= page <= index.page_count:
        raise PageOutOfRange(page, index.page_count)
    parts = (node_content(n, table_body) for n in index.by_page[page])
    return "\n\n".join(p for p in parts if p)


def document_text(index: DocumentIndex) -> str:
    """All content text in document order, each node once."""
    parts = (node_content(n) for n in index.content_nodes())
    return "\n\n".join(p for p in parts if p)


def document_words(index: DocumentIndex) -> tuple[list[str], list[int]]:
    """Words of :func:`document_text` with the starting page of each word's node."""
    words: list[str] = []
    pages: list[int] = []
    for n in index.content_nodes():
        w = node_content(n).split()
        words.extend(w)
        pages.extend([n.page_start] * len(w))
    return words, pages


def section_text(node: StructureNode, table_body: bool = True) -> str:
    """Section title line followed by the markdown of its whole subtree."""
    parts = []
    for n in node.walk():
        if n.kind is NodeKind.SECTION:
            parts.append(heading_line(n.title or "", n.level))
        content = node_content(n, table_body)
        if content:
            parts.append(content)
    return "\n\n".join(parts)


# --- metadata prompt ------------------------------------------------------

@dataclass(frozen=True)
class MetadataPrompt:
    body: str
    token_count: int


def _skeleton(node: StructureNode, include_text: bool) -> dict[str, Any]:
    entry: dict[str, Any] = {"id": node.id, "title": node.title}
    if node.level is not None:
        entry["level"] = node.level
    entry["pages"] = [node.page_start, node.page_end]
    _fill(entry, node.children, include_text)
    return entry


def _fill(entry: dict[str, Any], children: list[StructureNode], include_text: bool) -> None:
    sections, tables, figures, text = [], [], [], []
    # tables/figures under non-section containers are hoisted to the nearest section
    stack = list(reversed(children))
    while stack:
        node = stack.pop()
        if node.kind is NodeKind.SECTION:
            sections.append(_skeleton(node, include_text))
            continue
        if node.kind is NodeKind.TABLE:
            tables.append({"id": node.id, "caption": node.text, "pages": [node.page_start, node.page_end]})
        elif node.kind is NodeKind.FIGURE:
            figures.append({"id": node.id, "caption": node.text, "pages": [node.page_start, node.page_end]})
        elif include_text and node.text:
            text.append(node.text)
        stack.extend(reversed(node.children))
    if text:
        entry["text"] = "\n\n".join(text)
    if tables:
        entry["tables"] = tables
    if figures:
        entry["figures"] = figures
    if sections:
        entry["sections"] = sections


def to_metadata(
    index: DocumentIndex,
    include_text: bool = False,
    counter: TokenCounter = count_tokens,
) -> MetadataPrompt:
    """JSON skeleton of the document: sections, tables and figures with ids and pages.

    Paragraph bodies are left out unless ``include_text`` is set.
    """
    root = index.root
    if root.kind is NodeKind.SECTION:
        doc: dict[str, Any] = {"page_count": index.page_count, "sections": [_skeleton(root, include_text)]}
    else:
        doc = {"title": root.title, "page_count": index.page_count}
        if include_text and node_content(root):
            doc["text"] = node_content(root)
        _fill(doc, root.children, include_text)
    body = json.dumps(doc, ensure_ascii=False)
    return MetadataPrompt(body=body, token_count=counter(body))


def metadata_ids(body: str) -> list[str]:
    """Every section/table/figure id mentioned in a metadata body."""
    ids: list[str] = []

    def visit(entry: Mapping[str, Any]) -> None:
        for key in ("tables", "figures"):
            ids.extend(e["id"] for e in entry.get(key, []))
        for s in entry.get("sections", []):
            ids.append(s["id"])
            visit(s)

    visit(json.loads(body))
    return ids
