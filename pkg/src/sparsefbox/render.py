"""Deterministic SVG and JSON output for boxplot geometry and intensity fields.

SVG numbers are written with six significant digits and no timestamps, so
equal inputs give byte-identical documents. JSON keeps full float precision
so that parsing an emitted document reproduces the original object.

JSON schema (``schema_version`` = :data:`SCHEMA_VERSION`)
-----------------------------------------------------------
Every document is an object with ``schema_version`` and ``kind``.

``kind = "boxplot_geometry"``
    ``times`` (G), ``variable_names`` (p), ``median_index``, ``median``,
    ``median_observed``, ``lower``, ``upper``, ``fence_lower``,
    ``fence_upper``, ``sparseness``, ``boundary`` (each p x G),
    ``members``, ``outliers`` (index lists), ``outlier_stage`` (``"stage1"``
    or ``"stage2"`` per outlier), ``outlier_curves``, ``outlier_observed``
    (k x p x G), ``outlier_cell_tags`` (k x p x G of ``observed_stage1``,
    ``observed_stage2`` or ``missing``; informative only), ``factor``,
    ``reference``, ``subject_ids`` (list or null).

``kind = "intensity_field"``
    ``times`` (T), ``values`` (p lists of V), ``intensity`` (p arrays of
    T x V, or ``[]`` when the field has no events), ``scale`` (p),
    ``normalization``, ``bandwidths`` (p x 2), ``n_events`` (p),
    ``contours`` (p lists of ``{"level", "points"}``), ``variable_names``.

``kind = "boxplot_bundle"``
    ``geometry`` and optional ``intensity`` sub-documents as above.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from typing import Optional, Union
from xml.sax.saxutils import escape

import numpy as np

from .boxplot import BoxplotGeometry, IntensityField

__all__ = ["SCHEMA_VERSION", "StyleConfig", "emit_svg", "emit_json", "parse_json", "colormap"]

SCHEMA_VERSION = "1.0"
_HEX = re.compile(r"^#[0-9A-Fa-f]{6}$")


@dataclass(frozen=True)
class StyleConfig:
    """Colors, strokes and panel geometry of the SVG output.

    ``intensity_colors`` run from the most sparse intensity (white) to the
    least sparse one (magenta).
    """

    central_fill: str = "#FF00FF"
    sparse_fill: str = "#BEBEBE"
    reference: str = "#00FFFF"
    stage1: str = "#00A000"
    stage2: str = "#FF0000"
    missing: str = "#808080"
    median_observed: str = "#000000"
    median_missing: str = "#808080"
    envelope: str = "#0000FF"
    fence: str = "#0000FF"
    axis: str = "#000000"
    intensity_colors: tuple = ("#FFFFFF", "#FFFF00", "#FFA500", "#FF00FF")
    stroke_width: float = 1.5
    thin_width: float = 0.8
    panel_width: float = 320.0
    panel_height: float = 240.0
    margin: float = 40.0
    show_contours: bool = True
    dash: str = "6,3"
    dot: str = "1,3"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "intensity_colors":
                if len(v) < 2 or not all(isinstance(c, str) and _HEX.match(c) for c in v):
                    raise ValueError("intensity_colors must hold at least two #RRGGBB colors")
                object.__setattr__(self, f.name, tuple(v))
            elif isinstance(v, str) and f.name not in ("dash", "dot") and not _HEX.match(v):
                raise ValueError(f"{f.name} must be a #RRGGBB color, got {v!r}")
        if self.panel_width <= 0 or self.panel_height <= 0:
            raise ValueError("panel size must be positive")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")


def _num(x: float) -> str:
    s = f"{float(x):.6g}"
    return "0" if s == "-0" else s


def _hex_rgb(c: str) -> np.ndarray:
    return np.array([int(c[i : i + 2], 16) for i in (1, 3, 5)], dtype=float)


def colormap(v: np.ndarray, style: StyleConfig = StyleConfig()) -> list:
    """Map intensities in [0, 1] to hex colors; 1 is the first color of the ramp."""
    stops = np.array([_hex_rgb(c) for c in style.intensity_colors[::-1]])
    pos = np.linspace(0.0, 1.0, len(stops))
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    rgb = np.stack([np.interp(v, pos, stops[:, k]) for k in range(3)], axis=-1)
    rgb = np.rint(rgb).astype(int)
    return ["#%02X%02X%02X" % tuple(c) for c in rgb.reshape(-1, 3)]


class _Panel:
    """Affine map from (time, value) to pixel coordinates of one panel."""

    def __init__(self, j: int, t_range, v_range, style: StyleConfig):
        self.x0 = style.margin + j * (style.panel_width + style.margin)
        self.y0 = style.margin
        self.w, self.h = style.panel_width, style.panel_height
        self.t0, self.t1 = t_range
        lo, hi = v_range
        if not hi > lo:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.05 * (hi - lo)
        self.v0, self.v1 = lo - pad, hi + pad

    def x(self, t):
        span = self.t1 - self.t0 if self.t1 > self.t0 else 1.0
        return self.x0 + (np.asarray(t, dtype=float) - self.t0) / span * self.w

    def y(self, v):
        return self.y0 + (self.v1 - np.asarray(v, dtype=float)) / (self.v1 - self.v0) * self.h

    def points(self, t, v) -> str:
        return " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(self.x(t), self.y(v)))

    def path(self, t, v, seg: Optional[np.ndarray] = None) -> str:
        """Path data for the segments ``c -> c + 1`` selected by ``seg`` (all by default)."""
        xs, ys = self.x(t), self.y(v)
        n = len(xs)
        seg = np.ones(max(n - 1, 0), dtype=bool) if seg is None else seg
        parts, open_ = [], False
        for c in range(n - 1):
            if seg[c]:
                if not open_:
                    parts.append(f"M{_num(xs[c])},{_num(ys[c])}")
                    open_ = True
                parts.append(f"L{_num(xs[c + 1])},{_num(ys[c + 1])}")
            else:
                open_ = False
        return " ".join(parts)

    def frame(self, style: StyleConfig, title: str) -> list:
        return [
            f'<rect x="{_num(self.x0)}" y="{_num(self.y0)}" width="{_num(self.w)}" '
            f'height="{_num(self.h)}" fill="none" stroke="{style.axis}" stroke-width="{_num(style.thin_width)}"/>',
            f'<text x="{_num(self.x0 + self.w / 2)}" y="{_num(self.y0 - 8)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{escape(title)}</text>',
            f'<text x="{_num(self.x0)}" y="{_num(self.y0 + self.h + 14)}" font-family="sans-serif" '
            f'font-size="9">{_num(self.t0)}</text>',
            f'<text x="{_num(self.x0 + self.w)}" y="{_num(self.y0 + self.h + 14)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9">{_num(self.t1)}</text>',
            f'<text x="{_num(self.x0 - 4)}" y="{_num(self.y0 + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9">{_num(self.v1)}</text>',
            f'<text x="{_num(self.x0 - 4)}" y="{_num(self.y0 + self.h)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9">{_num(self.v0)}</text>',
        ]


def _polygon(panel: _Panel, t, top, bottom, fill: str, cls: str) -> str:
    xs = np.concatenate([t, t[::-1]])
    vs = np.concatenate([top, bottom[::-1]])
    return f'<polygon class="{cls}" points="{panel.points(xs, vs)}" fill="{fill}" stroke="none"/>'


def _polyline(panel: _Panel, t, v, color: str, width: float, cls: str, dash: Optional[str] = None) -> str:
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline class="{cls}" points="{panel.points(t, v)}" fill="none" stroke="{color}" '
        f'stroke-width="{_num(width)}"{d}/>'
    )


def _path(d: str, color: str, width: float, cls: str, dash: Optional[str] = None) -> str:
    ds = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<path class="{cls}" d="{d}" fill="none" stroke="{color}" stroke-width="{_num(width)}"{ds}/>'


def _raster(panel: _Panel, field: IntensityField, j: int, style: StyleConfig) -> list:
    I = field.intensity[j]
    tc, vc = field.times, field.values[j]
    if I.size == 0 or not np.any(I > 0):
        return []
    dt = (tc[1] - tc[0]) if tc.size > 1 else 1.0
    dv = (vc[1] - vc[0]) if vc.size > 1 else 1.0
    cols = np.array(colormap(I.ravel(), style)).reshape(I.shape)
    out = []
    # merge runs of equal color along the value axis
    for a in range(I.shape[0]):
        x = panel.x(tc[a] - dt / 2)
        w = panel.x(tc[a] + dt / 2) - x
        b = 0
        while b < I.shape[1]:
            if I[a, b] <= 0:
                b += 1
                continue
            e = b
            while e + 1 < I.shape[1] and I[a, e + 1] > 0 and cols[a, e + 1] == cols[a, b]:
                e += 1
            y_top = panel.y(vc[e] + dv / 2)
            h = panel.y(vc[b] - dv / 2) - y_top
            out.append(
                f'<rect x="{_num(x)}" y="{_num(y_top)}" width="{_num(w)}" height="{_num(h)}" '
                f'fill="{cols[a, b]}" stroke="none"/>'
            )
            b = e + 1
    return out


def _contours(panel: _Panel, field: IntensityField, j: int, style: StyleConfig) -> list:
    if j >= len(field.contours):
        return []
    out = []
    for level, pts in field.contours[j]:
        pts = np.asarray(pts)
        if pts.shape[0] < 2:
            continue
        d = panel.path(pts[:, 0], pts[:, 1])
        out.append(
            f'<path class="contour" data-level="{_num(level)}" d="{d}" fill="none" '
            f'stroke="{style.axis}" stroke-width="{_num(style.thin_width)}"/>'
        )
    return out


def _legend(style: StyleConfig, x: float, y: float, entries) -> list:
    out = [f'<g class="legend" font-family="sans-serif" font-size="10">']
    for k, (label, color, dash) in enumerate(entries):
        yy = y + 14 * k
        d = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(
            f'<line x1="{_num(x)}" y1="{_num(yy)}" x2="{_num(x + 24)}" y2="{_num(yy)}" stroke="{color}" '
            f'stroke-width="{_num(style.stroke_width)}"{d}/>'
        )
        out.append(f'<text x="{_num(x + 30)}" y="{_num(yy + 3)}">{escape(label)}</text>')
    out.append("</g>")
    return out


def _document(style: StyleConfig, p: int, body: list, legend_rows: int) -> str:
    width = style.margin + p * (style.panel_width + style.margin)
    height = 2 * style.margin + style.panel_height + 20 + 14 * legend_rows
    head = (
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_num(width)}" '
        f'height="{_num(height)}" viewBox="0 0 {_num(width)} {_num(height)}">\n'
        f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="#FFFFFF"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _geometry_svg(g: BoxplotGeometry, style: StyleConfig, field: Optional[IntensityField]) -> str:
    t = g.times
    body = []
    for j in range(g.p):
        stack = [g.fence_lower[j], g.fence_upper[j], g.lower[j], g.upper[j], g.median[j]]
        if g.outlier_curves.shape[0]:
            stack.append(g.outlier_curves[:, j, :].ravel())
        allv = np.concatenate([np.ravel(a) for a in stack])
        panel = _Panel(j, (t[0], t[-1]), (allv.min(), allv.max()), style)
        body.append(f'<g class="panel" data-variable="{escape(str(g.variable_names[j]))}">')
        if field is not None:
            body += _raster(panel, field, j, style)
            if style.show_contours:
                body += _contours(panel, field, j, style)
        else:
            body.append(_polygon(panel, t, g.boundary[j], g.lower[j], style.central_fill, "observed-area"))
            body.append(_polygon(panel, t, g.upper[j], g.boundary[j], style.sparse_fill, "sparse-area"))
        ref = g.lower[j] + g.reference * (g.upper[j] - g.lower[j])
        body.append(_polyline(panel, t, ref, style.reference, style.thin_width, "reference", style.dot))
        body.append(_polyline(panel, t, g.lower[j], style.envelope, style.stroke_width, "envelope"))
        body.append(_polyline(panel, t, g.upper[j], style.envelope, style.stroke_width, "envelope"))
        body.append(_polyline(panel, t, g.fence_lower[j], style.fence, style.thin_width, "fence"))
        body.append(_polyline(panel, t, g.fence_upper[j], style.fence, style.thin_width, "fence"))
        for k, stage in enumerate(g.outlier_stage):
            obs = g.outlier_observed[k, j]
            color = style.stage1 if stage == "stage1" else style.stage2
            # a segment is observed when both of its end cells are
            seen = obs[:-1] & obs[1:]
            if seen.any():
                d = panel.path(t, g.outlier_curves[k, j], seen)
                body.append(_path(d, color, style.stroke_width, f"outlier {stage}", style.dash))
            if not seen.all():
                d = panel.path(t, g.outlier_curves[k, j], ~seen)
                body.append(_path(d, style.missing, style.stroke_width, "outlier missing", style.dash))
        mo = g.median_observed[j]
        seen = mo[:-1] & mo[1:]
        if seen.any():
            body.append(_path(panel.path(t, g.median[j], seen), style.median_observed,
                              style.stroke_width, "median observed"))
        if not seen.all():
            body.append(_path(panel.path(t, g.median[j], ~seen), style.median_missing,
                              style.stroke_width, "median missing"))
        body += panel.frame(style, str(g.variable_names[j]))
        body.append("</g>")
    entries = [("median", style.median_observed, None), ("50% sparseness", style.reference, style.dot),
               ("outlier (directional outlyingness)", style.stage1, style.dash),
               ("outlier (functional boxplot)", style.stage2, style.dash),
               ("fitted missing values", style.missing, style.dash)]
    body += _legend(style, style.margin, 2 * style.margin + style.panel_height, entries)
    return _document(style, g.p, body, len(entries))


def _field_svg(f: IntensityField, style: StyleConfig) -> str:
    body = []
    for j in range(f.p):
        v = f.values[j]
        panel = _Panel(j, (f.times[0], f.times[-1]), (v[0], v[-1]), style)
        name = f.variable_names[j] if j < len(f.variable_names) else f"X{j + 1}"
        body.append(f'<g class="panel" data-variable="{escape(str(name))}">')
        body += _raster(panel, f, j, style)
        if style.show_contours:
            body += _contours(panel, f, j, style)
        body += panel.frame(style, str(name))
        body.append("</g>")
    entries = [("most sparse", style.intensity_colors[0], None),
               ("least sparse", style.intensity_colors[-1], None)]
    body += _legend(style, style.margin, 2 * style.margin + style.panel_height, entries)
    return _document(style, f.p, body, len(entries))


def emit_svg(
    g: Union[BoxplotGeometry, IntensityField],
    style: StyleConfig = StyleConfig(),
    intensity: Optional[IntensityField] = None,
) -> str:
    """SVG document with one panel per variable.

    Parameters
    ----------
    g : BoxplotGeometry or IntensityField
    style : StyleConfig
    intensity : IntensityField, optional
        With a geometry, fill the central region with this field instead of
        the observed and sparse proportion areas (the intensity boxplot).

    Returns
    -------
    str
        Outliers are the only dashed ``path`` elements: one per outlier and
        variable in its stage color, plus one gray path for its fitted
        missing segments when it has any.
    """
    if isinstance(g, IntensityField):
        return _field_svg(g, style)
    if not isinstance(g, BoxplotGeometry):
        raise TypeError("emit_svg expects a BoxplotGeometry or an IntensityField")
    return _geometry_svg(g, style, intensity)


def _arr(a) -> list:
    return np.asarray(a).tolist()


def _geometry_doc(g: BoxplotGeometry) -> dict:
    return {
        "times": _arr(g.times),
        "variable_names": list(g.variable_names),
        "median_index": int(g.median_index),
        "median": _arr(g.median),
        "median_observed": _arr(g.median_observed),
        "lower": _arr(g.lower),
        "upper": _arr(g.upper),
        "fence_lower": _arr(g.fence_lower),
        "fence_upper": _arr(g.fence_upper),
        "members": _arr(g.members),
        "sparseness": _arr(g.sparseness),
        "boundary": _arr(g.boundary),
        "outliers": _arr(g.outliers),
        "outlier_stage": list(g.outlier_stage),
        "outlier_curves": _arr(g.outlier_curves),
        "outlier_observed": _arr(g.outlier_observed),
        "outlier_cell_tags": g.cell_tags(),
        "factor": float(g.factor),
        "reference": float(g.reference),
        "subject_ids": None if g.subject_ids is None else list(g.subject_ids),
    }


def _field_doc(f: IntensityField) -> dict:
    empty = int(np.sum(f.n_events)) == 0
    return {
        "times": _arr(f.times),
        "values": [_arr(v) for v in f.values],
        "intensity": [] if empty else [_arr(a) for a in f.intensity],
        "scale": _arr(f.scale),
        "normalization": f.normalization,
        "bandwidths": _arr(f.bandwidths),
        "n_events": _arr(f.n_events),
        "contours": [[{"level": float(lv), "points": _arr(pts)} for lv, pts in per] for per in f.contours],
        "variable_names": list(f.variable_names),
    }


def emit_json(g: Union[BoxplotGeometry, IntensityField], intensity: Optional[IntensityField] = None) -> str:
    """Schema-versioned JSON text of a geometry, an intensity field, or both.

    Floats are written in their shortest round-trip form, so
    ``parse_json(emit_json(g)) == g``.
    """
    if isinstance(g, IntensityField):
        doc = {"kind": "intensity_field", **_field_doc(g)}
    elif intensity is not None:
        doc = {"kind": "boxplot_bundle", "geometry": _geometry_doc(g), "intensity": _field_doc(intensity)}
    elif isinstance(g, BoxplotGeometry):
        doc = {"kind": "boxplot_geometry", **_geometry_doc(g)}
    else:
        raise TypeError("emit_json expects a BoxplotGeometry or an IntensityField")
    doc["schema_version"] = SCHEMA_VERSION
    return json.dumps(doc, sort_keys=True, allow_nan=False, separators=(",", ":")) + "\n"


def _parse_geometry(d: dict) -> BoxplotGeometry:
    times = np.asarray(d["times"], dtype=float)
    p, G = len(d["variable_names"]), times.size
    k = len(d["outliers"])
    return BoxplotGeometry(
        times=times,
        variable_names=tuple(d["variable_names"]),
        median_index=int(d["median_index"]),
        median=np.asarray(d["median"], dtype=float).reshape(p, G),
        median_observed=np.asarray(d["median_observed"], dtype=bool).reshape(p, G),
        lower=np.asarray(d["lower"], dtype=float).reshape(p, G),
        upper=np.asarray(d["upper"], dtype=float).reshape(p, G),
        fence_lower=np.asarray(d["fence_lower"], dtype=float).reshape(p, G),
        fence_upper=np.asarray(d["fence_upper"], dtype=float).reshape(p, G),
        members=np.asarray(d["members"], dtype=np.int64),
        sparseness=np.asarray(d["sparseness"], dtype=float).reshape(p, G),
        boundary=np.asarray(d["boundary"], dtype=float).reshape(p, G),
        outliers=np.asarray(d["outliers"], dtype=np.int64).reshape(k),
        outlier_stage=tuple(d["outlier_stage"]),
        outlier_curves=np.asarray(d["outlier_curves"], dtype=float).reshape(k, p, G),
        outlier_observed=np.asarray(d["outlier_observed"], dtype=bool).reshape(k, p, G),
        factor=float(d["factor"]),
        reference=float(d["reference"]),
        subject_ids=None if d["subject_ids"] is None else tuple(d["subject_ids"]),
    )


def _parse_field(d: dict) -> IntensityField:
    times = np.asarray(d["times"], dtype=float)
    values = [np.asarray(v, dtype=float) for v in d["values"]]
    if d["intensity"]:
        inten = [np.asarray(a, dtype=float).reshape(times.size, v.size) for a, v in zip(d["intensity"], values)]
    else:
        inten = [np.zeros((times.size, v.size)) for v in values]
    p = len(values)
    return IntensityField(
        times=times,
        values=values,
        intensity=inten,
        scale=np.asarray(d["scale"], dtype=float).reshape(p),
        normalization=d["normalization"],
        bandwidths=np.asarray(d["bandwidths"], dtype=float).reshape(p, 2),
        n_events=np.asarray(d["n_events"], dtype=np.int64).reshape(p),
        contours=[[(float(c["level"]), np.asarray(c["points"], dtype=float).reshape(-1, 2)) for c in per]
                  for per in d["contours"]],
        variable_names=tuple(d["variable_names"]),
    )


def parse_json(text: str):
    """Inverse of :func:`emit_json`.

    Returns a BoxplotGeometry, an IntensityField, or a ``(geometry,
    intensity)`` pair for bundles.
    """
    d = json.loads(text)
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {version!r}; expected {SCHEMA_VERSION}")
    kind = d.get("kind")
    if kind == "boxplot_geometry":
        return _parse_geometry(d)
    if kind == "intensity_field":
        return _parse_field(d)
    if kind == "boxplot_bundle":
        return _parse_geometry(d["geometry"]), _parse_field(d["intensity"])
    raise ValueError(f"unknown document kind {kind!r}")
