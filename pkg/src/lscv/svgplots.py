"""Minimal static SVG renderings of the study aggregates.

CSV and JSON are the authoritative outputs; these plots are a
dependency-free convenience for eyeballing a run.
"""

from __future__ import annotations

_W, _H = 480, 320
_ML, _MR, _MT, _MB = 50, 15, 30, 35


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13">{title}</text>',
    ]


def _axes(x0, y0, x1, y1) -> str:
    return (f'<path d="M {x0} {y1} L {x0} {y0} M {x0} {y1} L {x1} {y1}" '
            f'stroke="black" fill="none" stroke-width="1"/>')


def write_histogram_svg(path, edges, counts, marker=None, title="") -> None:
    """Bar histogram over fixed-width bins with an optional vertical marker."""
    x0, y0, x1, y1 = _ML, _MT, _W - _MR, _H - _MB
    lo, hi = edges[0], edges[-1]
    peak = max(max(counts), 1)

    def sx(v):
        return x0 + (v - lo) / (hi - lo) * (x1 - x0)

    def sy(c):
        return y1 - c / peak * (y1 - y0)

    parts = _header(title)
    for i, c in enumerate(counts):
        bx, bw = sx(edges[i]), sx(edges[i + 1]) - sx(edges[i])
        parts.append(
            f'<rect x="{bx:.2f}" y="{sy(c):.2f}" width="{bw:.2f}" '
            f'height="{y1 - sy(c):.2f}" fill="#7a9cc6" stroke="black" stroke-width="0.5"/>')
    if marker is not None and lo <= marker <= hi:
        parts.append(
            f'<line x1="{sx(marker):.2f}" y1="{y0}" x2="{sx(marker):.2f}" y2="{y1}" '
            f'stroke="black" stroke-width="2"/>')
    parts.append(_axes(x0, y0, x1, y1))
    for v in (lo, (lo + hi) / 2, hi):
        parts.append(
            f'<text x="{sx(v):.2f}" y="{y1 + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{v:.2f}</text>')
    parts.append(
        f'<text x="{x0 - 8}" y="{sy(peak) + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{peak}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


def write_boxplot_svg(path, labeled_quantiles, title="") -> None:
    """Boxes from (label, {q05, q25, q50, q75, q95}) pairs.

    The box spans the central 50% and the whiskers the central 90%,
    mirroring the study's reporting convention.
    """
    x0, y0, x1, y1 = _ML, _MT, _W - _MR, _H - _MB
    vals = [q[k] for _, q in labeled_quantiles for k in ("q05", "q95")]
    lo, hi = min(vals), max(vals)
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def sy(v):
        return y1 - (v - lo) / (hi - lo) * (y1 - y0)

    parts = _header(title)
    k = len(labeled_quantiles)
    slot = (x1 - x0) / k
    for i, (label, q) in enumerate(labeled_quantiles):
        cx = x0 + (i + 0.5) * slot
        bw = 0.4 * slot
        parts.append(
            f'<line x1="{cx:.2f}" y1="{sy(q["q05"]):.2f}" x2="{cx:.2f}" '
            f'y2="{sy(q["q95"]):.2f}" stroke="black" stroke-width="1"/>')
        for wq in ("q05", "q95"):
            parts.append(
                f'<line x1="{cx - bw / 4:.2f}" y1="{sy(q[wq]):.2f}" '
                f'x2="{cx + bw / 4:.2f}" y2="{sy(q[wq]):.2f}" stroke="black" stroke-width="1"/>')
        parts.append(
            f'<rect x="{cx - bw / 2:.2f}" y="{sy(q["q75"]):.2f}" width="{bw:.2f}" '
            f'height="{sy(q["q25"]) - sy(q["q75"]):.2f}" fill="#c6d8ef" stroke="black"/>')
        parts.append(
            f'<line x1="{cx - bw / 2:.2f}" y1="{sy(q["q50"]):.2f}" '
            f'x2="{cx + bw / 2:.2f}" y2="{sy(q["q50"]):.2f}" stroke="black" stroke-width="2"/>')
        parts.append(
            f'<text x="{cx:.2f}" y="{y1 + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{label}</text>')
    parts.append(_axes(x0, y0, x1, y1))
    for v in (lo + pad, hi - pad):
        parts.append(
            f'<text x="{x0 - 6}" y="{sy(v) + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="9">{v:.3g}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
