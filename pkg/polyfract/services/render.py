"""SVG drawings of generations with optional overlays."""
from itertools import product
from typing import List, Literal, Optional, Tuple
import xml.etree.ElementTree as ET

from pydantic import BaseModel, Field

from polyfract.config.settings import settings
from polyfract.core.exceptions import InvalidInputError, TooLargeError
from polyfract.core.workers import ordered_map
from polyfract.services.boundary import SubsetZJ, components, essential_boundary
from polyfract.services.system import ValidatedSystem, Word
from polyfract.services.wordtree import level_graph

SVG_NS = "http://www.w3.org/2000/svg"

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


class RenderSpec(BaseModel):
    level: int = Field(..., ge=1)
    overlay: Literal["none", "essential_edges", "components", "phi_parity_fill"] = "none"
    cut: List[int] = Field(default_factory=list, description="X for the components overlay")
    size: int = 800
    cell_stroke: float = 0.002
    overlay_stroke: float = 0.012
    grey: str = "#bfbfbf"
    white: str = "#ffffff"
    line: str = "#000000"
    accent: str = "#d62728"


def parse_overlay(text: Optional[str]) -> Tuple[str, List[int]]:
    """KIND or components:i,j,... as given on the command line."""
    if not text:
        return "none", []
    kind, _, arg = text.partition(":")
    if kind not in ("none", "essential_edges", "components", "phi_parity_fill"):
        raise InvalidInputError(f"unknown overlay {kind!r}", {"overlay": text})
    try:
        cut = [int(part) for part in arg.split(",") if part.strip()]
    except ValueError as err:
        raise InvalidInputError(f"bad overlay argument {arg!r}", {"overlay": text}) from err
    return kind, cut


def _fmt(x: float) -> str:
    out = f"{x:.9g}"
    return "0" if out == "-0" else out


def _points(coords) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(-y)}" for x, y in coords)


def _cell_outline(sys: ValidatedSystem, w: Word) -> Tuple[str, bool]:
    f = sys.word_contraction(w)
    return _points((z.real, z.imag) for z in f.float_vertices), f.phi.conj


def render_svg(sys: ValidatedSystem, spec: RenderSpec, workers: Optional[int] = None) -> bytes:
    """One polygon per level-m cell, overlays on top. Cell outlines are computed
    on the worker pool; the output does not depend on its size.

    Raises:
        TooLargeError: N^m above the configured node guard
    """
    m = spec.level
    if sys.N ** m > settings.max_level_nodes:
        raise TooLargeError(f"level {m} has {sys.N ** m} cells", {"level": m, "nodes": sys.N ** m})

    outline = [z.to_xy() for z in sys.polygon.vertices]
    xs = [x for x, _ in outline]
    ys = [-y for _, y in outline]
    pad = 0.05 * max(max(xs) - min(xs), max(ys) - min(ys))
    x0, y0 = min(xs) - pad, min(ys) - pad
    width, height = max(xs) - min(xs) + 2 * pad, max(ys) - min(ys) + 2 * pad
    scale = max(width, height)

    root = ET.Element("svg", {
        "xmlns": SVG_NS,
        "version": "1.1",
        "width": str(spec.size),
        "height": str(round(spec.size * height / width)),
        "viewBox": f"{_fmt(x0)} {_fmt(y0)} {_fmt(width)} {_fmt(height)}",
    })

    fills = {}
    if spec.overlay == "components":
        cut = SubsetZJ.of(sys.J, spec.cut)
        parts = components(sys, level_graph(sys, m), cut).components
        for k, part in enumerate(parts):
            for w in part:
                fills[w] = PALETTE[k % len(PALETTE)]

    cells = ET.SubElement(root, "g", {"id": "cells", "stroke": spec.line, "stroke-width": _fmt(spec.cell_stroke * scale)})
    words = list(product(range(sys.N), repeat=m))
    outlines = ordered_map(lambda w: _cell_outline(sys, w), words, workers)
    for w, (points, conj) in zip(words, outlines):
        fill = fills.get(w) or (spec.grey if conj else spec.white)
        ET.SubElement(cells, "polygon", {"points": points, "fill": fill})

    if spec.overlay == "essential_edges":
        group = ET.SubElement(root, "g", {"id": "overlay", "stroke": spec.accent, "stroke-width": _fmt(spec.overlay_stroke * scale)})
        for i in essential_boundary(sys):
            (ax, ay), (bx, by) = outline[(i - 1) % sys.J], outline[i]
            ET.SubElement(group, "line", {"x1": _fmt(ax), "y1": _fmt(-ay), "x2": _fmt(bx), "y2": _fmt(-by)})

    return ET.tostring(root, encoding="utf-8", xml_declaration=True)
