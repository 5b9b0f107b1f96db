"""Build structure trees from interchange JSON or simple HTML.

The interchange format is a flat, ordered element list in which each
element names its ancestry with a slash-delimited path such as
``Document/Section[2]/Table[1]``. See ``docs/interchange.md``.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Any, Mapping

import httpx

from .doc_model import NodeKind, StructureNode
from .errors import (
    InvalidPath,
    MalformedHtml,
    MalformedJson,
    NetworkError,
    ServiceError,
    UnknownSchemaVersion,
    ValidationError,
)

SCHEMA_VERSION = "structriage/1"
ROOT_PATH = "Document"
ROOT_ID = "doc"
EXTRACT_URL_ENV = "STRUCTRIAGE_EXTRACT_URL"

_ID_PREFIX = {
    NodeKind.SECTION: "sec",
    NodeKind.TABLE: "tbl",
    NodeKind.FIGURE: "fig",
    NodeKind.PARAGRAPH: "p",
    NodeKind.HEADING: "h",
    NodeKind.CAPTION: "cap",
    NodeKind.LIST_ITEM: "li",
    NodeKind.OTHER: "el",
}

_KIND_ALIASES = {
    "section": NodeKind.SECTION, "sect": NodeKind.SECTION,
    "heading": NodeKind.HEADING, "title": NodeKind.HEADING,
    "h1": NodeKind.HEADING, "h2": NodeKind.HEADING, "h3": NodeKind.HEADING,
    "h4": NodeKind.HEADING, "h5": NodeKind.HEADING, "h6": NodeKind.HEADING,
    "paragraph": NodeKind.PARAGRAPH, "p": NodeKind.PARAGRAPH, "text": NodeKind.PARAGRAPH,
    "table": NodeKind.TABLE,
    "figure": NodeKind.FIGURE, "image": NodeKind.FIGURE,
    "caption": NodeKind.CAPTION,
    "list_item": NodeKind.LIST_ITEM, "listitem": NodeKind.LIST_ITEM, "li": NodeKind.LIST_ITEM,
    "other": NodeKind.OTHER,
}


def map_kind(kind: str) -> NodeKind:
    return _KIND_ALIASES.get(kind.strip().lower(), NodeKind.OTHER)


def assign_ids(root: StructureNode) -> StructureNode:
    """Give id-less nodes ``<prefix>-<n>`` ids, numbered per kind in pre-order."""
    counters: dict[NodeKind, int] = {}
    for node in root.walk():
        n = counters[node.kind] = counters.get(node.kind, 0) + 1
        if not node.id:
            node.id = f"{_ID_PREFIX[node.kind]}-{n}"
    return root


def _fit_spans(node: StructureNode, explicit: set[int]) -> None:
    """Widen container page spans to cover their children (post-order)."""
    for child in node.children:
        _fit_spans(child, explicit)
    if node.children and id(node) not in explicit:
        node.page_start = min([node.page_start] + [c.page_start for c in node.children])
        node.page_end = max([node.page_end] + [c.page_end for c in node.children])


def _section_levels(node: StructureNode, depth: int = 0) -> None:
    for child in node.children:
        if child.kind is NodeKind.SECTION:
            if child.level is None:
                child.level = depth + 1
            _section_levels(child, depth + 1)
        else:
            _section_levels(child, depth)


# --- interchange ----------------------------------------------------------

@dataclass
class InterchangeElement:
    path: str
    kind: str
    page: int
    text: str = ""
    attributes: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "kind": self.kind, "page": self.page,
                "text": self.text, "attributes": self.attributes}


@dataclass
class InterchangeDocument:
    schema_version: str
    elements: list[InterchangeElement]
    title: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"schema_version": self.schema_version, "title": self.title,
                "elements": [e.to_dict() for e in self.elements]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


_SEGMENT = re.compile(r"^[A-Za-z_][\w-]*(\[\d+\])?$")


def _parent_path(path: str) -> str:
    return path.rsplit("/", 1)[0]


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _check_attributes(i: int, page: int, attrs: Mapping[str, Any]) -> None:
    if "page_end" in attrs and not (_is_int(attrs["page_end"]) and attrs["page_end"] >= page):
        raise ValidationError(f"element {i}: page_end must be an integer >= page")
    if "level" in attrs and not (_is_int(attrs["level"]) and attrs["level"] >= 0):
        raise ValidationError(f"element {i}: level must be a non-negative integer")
    for key in ("id", "title"):
        if key in attrs and not isinstance(attrs[key], str):
            raise ValidationError(f"element {i}: {key} must be a string")
    rows = attrs.get("rows")
    if rows is not None and not (isinstance(rows, list) and all(isinstance(r, list) for r in rows)):
        raise ValidationError(f"element {i}: rows must be a list of lists")


def validate_interchange(obj: Any) -> InterchangeDocument:
    """Check an already-decoded interchange object and return it typed."""
    if not isinstance(obj, Mapping):
        raise ValidationError("interchange document must be a JSON object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnknownSchemaVersion(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION!r}")
    if "elements" not in obj or not isinstance(obj["elements"], list):
        raise ValidationError("interchange document lacks an 'elements' list")
    title = obj.get("title")
    if title is not None and not isinstance(title, str):
        raise ValidationError("'title' must be a string")

    elements = []
    declared = {ROOT_PATH}
    for i, raw in enumerate(obj["elements"]):
        if not isinstance(raw, Mapping):
            raise ValidationError(f"element {i} is not an object")
        try:
            path, kind, page = raw["path"], raw["kind"], raw["page"]
        except KeyError as exc:
            raise ValidationError(f"element {i} lacks field {exc.args[0]!r}") from exc
        text = raw.get("text", "")
        attributes = raw.get("attributes", {}) or {}
        if not isinstance(path, str) or not isinstance(kind, str) or not isinstance(text, str):
            raise ValidationError(f"element {i}: path, kind and text must be strings")
        if not isinstance(page, int) or isinstance(page, bool) or page < 1:
            raise ValidationError(f"element {i}: page must be an integer >= 1")
        if not isinstance(attributes, Mapping):
            raise ValidationError(f"element {i}: attributes must be an object")
        _check_attributes(i, page, attributes)
        segments = path.split("/")
        if segments[0] != ROOT_PATH or not all(_SEGMENT.match(s) for s in segments):
            raise InvalidPath(f"element {i}: malformed path {path!r}")
        if path == ROOT_PATH:
            if i != 0:
                raise InvalidPath("the Document element, when present, must come first")
        elif path in declared:
            raise InvalidPath(f"element {i}: duplicate path {path!r}")
        elif _parent_path(path) not in declared:
            raise InvalidPath(f"element {i}: parent of {path!r} was never declared")
        declared.add(path)
        elements.append(InterchangeElement(path, kind, page, text, dict(attributes)))
    return InterchangeDocument(schema_version=version, elements=elements, title=title)


def _node_from_element(el: InterchangeElement) -> tuple[StructureNode, bool]:
    kind = map_kind(el.kind)
    attrs = el.attributes
    title = attrs.get("title")
    text = el.text
    if kind is NodeKind.SECTION and title is None:
        title, text = text, ""
    page_end = attrs.get("page_end", el.page)
    level = attrs.get("level")
    if kind is NodeKind.HEADING and level is None and el.kind.lower() in {f"h{i}" for i in range(1, 7)}:
        level = int(el.kind[1])
    rows = attrs.get("rows")
    node = StructureNode(
        id=str(attrs.get("id", "")),
        kind=kind,
        page_start=el.page,
        page_end=int(page_end),
        title=title,
        level=level,
        text=text,
        rows=[[str(c) for c in r] for r in rows] if rows is not None else None,
    )
    return node, "page_end" in attrs


def interchange_to_tree(doc: InterchangeDocument) -> StructureNode:
    explicit: set[int] = set()
    by_path: dict[str, StructureNode] = {}
    elements = doc.elements
    if elements and elements[0].path == ROOT_PATH:
        root, pinned = _node_from_element(elements[0])
        elements = elements[1:]
    else:
        root, pinned = StructureNode(id=ROOT_ID, kind=NodeKind.OTHER, title=doc.title), False
        if elements:
            root.page_start = min(e.page for e in elements)
            root.page_end = root.page_start
    if pinned:
        explicit.add(id(root))
    by_path[ROOT_PATH] = root
    for el in elements:
        node, pinned = _node_from_element(el)
        if pinned:
            explicit.add(id(node))
        by_path[_parent_path(el.path)].children.append(node)
        by_path[el.path] = node
    _fit_spans(root, explicit)
    _section_levels(root, 0 if root.kind is not NodeKind.SECTION else (root.level or 1))
    return assign_ids(root)


def parse_interchange(raw: bytes | str) -> StructureNode:
    try:
        obj = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    return interchange_to_tree(validate_interchange(obj))


def emit_interchange(root: StructureNode) -> InterchangeDocument:
    """Inverse of :func:`parse_interchange` for well-formed trees."""
    elements: list[InterchangeElement] = []

    def element(node: StructureNode, path: str) -> InterchangeElement:
        attrs: dict[str, Any] = {"id": node.id}
        if node.title is not None:
            attrs["title"] = node.title
        if node.level is not None:
            attrs["level"] = node.level
        attrs["page_end"] = node.page_end
        if node.rows is not None:
            attrs["rows"] = [list(r) for r in node.rows]
        return InterchangeElement(path, node.kind.value, node.page_start, node.text, attrs)

    def visit(node: StructureNode, path: str) -> None:
        counts: dict[str, int] = {}
        for child in node.children:
            name = child.kind.value.title().replace("_", "")
            counts[name] = counts.get(name, 0) + 1
            child_path = f"{path}/{name}[{counts[name]}]"
            elements.append(element(child, child_path))
            visit(child, child_path)

    elements.append(element(root, ROOT_PATH))
    visit(root, ROOT_PATH)
    return InterchangeDocument(SCHEMA_VERSION, elements, title=root.title)


# --- extraction service client --------------------------------------------

def fetch_extraction(
    endpoint: str | None,
    document: bytes,
    content_type: str = "application/pdf",
    timeout: float = 120.0,
    client: httpx.Client | None = None,
) -> InterchangeDocument:
    """POST document bytes to an extraction service; no retries."""
    endpoint = endpoint or os.environ.get(EXTRACT_URL_ENV)
    if not endpoint:
        raise ValueError(f"no extraction endpoint given and {EXTRACT_URL_ENV} is unset")
    if not document:
        raise ValueError("document is empty")
    http = client or httpx.Client(timeout=timeout)
    try:
        resp = http.post(endpoint, content=document, headers={"Content-Type": content_type})
    except httpx.HTTPError as exc:
        raise NetworkError(f"extraction request failed: {exc}") from exc
    finally:
        if client is None:
            http.close()
    if resp.status_code >= 400:
        raise ServiceError(resp.status_code, resp.text)
    try:
        obj = resp.json()
    except ValueError as exc:
        raise ValidationError(f"extraction service returned non-JSON body: {exc}") from exc
    return validate_interchange(obj)


# --- HTML subset ----------------------------------------------------------

_HEADINGS = {f"h{i}": i for i in range(1, 7)}
_VOID = {"br", "img", "hr", "meta", "link", "input", "wbr", "col", "source"}
_TRANSPARENT = {"html", "body", "head", "div", "span", "b", "i", "em", "strong", "a", "u",
                "code", "small", "sup", "sub", "main", "article", "header", "footer",
                "nav", "section", "ol", "ul", "thead", "tbody", "tfoot", "blockquote"}
_TEXT_SINKS = {"p", "li", "figcaption", "caption", "td", "th", "title"} | set(_HEADINGS)


class _HtmlTreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = StructureNode(id=ROOT_ID, kind=NodeKind.OTHER)
        self.sections: list[StructureNode] = []  # open sections, innermost last
        self.stack: list[str] = []
        self.page = 1
        self.buf: list[str] | None = None
        self.doc_title: str | None = None
        self.table: StructureNode | None = None
        self.row: list[str] | None = None
        self.figure: StructureNode | None = None
        self.saw_heading = False

    def _container(self) -> StructureNode:
        return self.sections[-1] if self.sections else self.root

    def _page_from(self, attrs) -> int:
        for k, v in attrs:
            if k == "data-page":
                try:
                    page = int(v)
                except (TypeError, ValueError):
                    raise MalformedHtml(f"bad data-page value {v!r}") from None
                if page < 1:
                    raise MalformedHtml(f"bad data-page value {v!r}")
                self.page = page
        return self.page

    def handle_starttag(self, tag, attrs):
        page = self._page_from(attrs)
        if tag in _VOID:
            if tag == "img" and self.figure is not None and not self.figure.text:
                self.figure.text = dict(attrs).get("alt") or ""
            return
        if tag not in _TRANSPARENT | _TEXT_SINKS | {"table", "tr", "figure"}:
            raise MalformedHtml(f"unsupported tag <{tag}>")
        if tag in _TEXT_SINKS and self.buf is not None and tag not in {"td", "th"}:
            raise MalformedHtml(f"<{tag}> nested inside another text element")
        self.stack.append(tag)
        if tag in _TEXT_SINKS:
            self.buf = []
        elif tag == "table":
            if self.table is not None:
                raise MalformedHtml("nested tables are not supported")
            self.table = StructureNode(id="", kind=NodeKind.TABLE, page_start=page, page_end=page, rows=[])
        elif tag == "tr":
            if self.table is None:
                raise MalformedHtml("<tr> outside <table>")
            self.row = []
        elif tag == "figure":
            self.figure = StructureNode(id="", kind=NodeKind.FIGURE, page_start=page, page_end=page)

    def handle_startendtag(self, tag, attrs):
        if tag in _VOID:
            self.handle_starttag(tag, attrs)
        else:
            raise MalformedHtml(f"self-closing <{tag}/> is not allowed")

    def handle_endtag(self, tag):
        if tag in _VOID:
            return
        if not self.stack or self.stack[-1] != tag:
            expected = self.stack[-1] if self.stack else "nothing"
            raise MalformedHtml(f"unexpected </{tag}>; expected </{expected}>")
        self.stack.pop()
        if tag in _TEXT_SINKS:
            text = " ".join("".join(self.buf or []).split())
            self.buf = None
            self._finish_text(tag, text)
        elif tag == "tr":
            if self.row:
                self.table.rows.append(self.row)
            self.row = None
        elif tag == "table":
            self.table.page_end = max(self.table.page_end, self.page)
            self._container().children.append(self.table)
            self.table = None
        elif tag == "figure":
            self.figure.page_end = max(self.figure.page_end, self.page)
            self._container().children.append(self.figure)
            self.figure = None

    def _finish_text(self, tag: str, text: str) -> None:
        page = self.page
        if tag == "title":
            self.doc_title = text
        elif tag in _HEADINGS:
            level = _HEADINGS[tag]
            self.saw_heading = True
            while self.sections and (self.sections[-1].level or 0) >= level:
                self.sections.pop()
            section = StructureNode(id="", kind=NodeKind.SECTION, title=text, level=level,
                                    page_start=page, page_end=page)
            self._container().children.append(section)
            self.sections.append(section)
        elif tag in {"td", "th"}:
            if self.row is None:
                raise MalformedHtml(f"<{tag}> outside <tr>")
            self.row.append(text)
        elif tag == "caption":
            if self.table is None:
                raise MalformedHtml("<caption> outside <table>")
            self.table.text = text
        elif tag == "figcaption":
            if self.figure is None:
                raise MalformedHtml("<figcaption> outside <figure>")
            self.figure.text = text
        elif text:
            kind = NodeKind.LIST_ITEM if tag == "li" else NodeKind.PARAGRAPH
            node = StructureNode(id="", kind=kind, text=text, page_start=page, page_end=page)
            (self.figure or self._container()).children.append(node)

    def handle_data(self, data):
        if self.buf is not None:
            self.buf.append(data)
        elif data.strip() and not (self.table or self.figure):
            # stray text outside any block element becomes a paragraph
            text = " ".join(data.split())
            self._container().children.append(
                StructureNode(id="", kind=NodeKind.PARAGRAPH, text=text,
                              page_start=self.page, page_end=self.page))


def parse_html_lite(html: str) -> StructureNode:
    """Parse the h1-h6 / p / table / figure / list subset into a structure tree.

    Headings open sections at their level. Without any heading, all content
    goes under one implicit section named after ``<title>`` (or "Document").
    """
    builder = _HtmlTreeBuilder()
    builder.feed(html)
    builder.close()
    if builder.stack:
        raise MalformedHtml(f"unclosed <{builder.stack[-1]}>")
    root = builder.root
    root.title = builder.doc_title
    if not builder.saw_heading:
        first = min((c.page_start for c in root.children), default=1)
        implicit = StructureNode(id="", kind=NodeKind.SECTION, page_start=first, page_end=first,
                                 title=builder.doc_title or "Document", level=1, children=root.children)
        root.children = [implicit]
    _fit_spans(root, set())
    return assign_ids(root)
