"""Structural model of Haskell source files."""

from .model import (
    ConstructNode,
    FunctionUnit,
    ImportDecl,
    ParseGap,
    Signature,
    SourceFile,
)
from .parser import (
    count_loc,
    discover_sources,
    find_unused_imports,
    parse_path,
    parse_source,
    render_spans,
)

__all__ = [
    "ConstructNode", "FunctionUnit", "ImportDecl", "ParseGap", "Signature", "SourceFile",
    "count_loc", "discover_sources", "find_unused_imports", "parse_path", "parse_source",
    "render_spans",
]
