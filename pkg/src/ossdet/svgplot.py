"""Minimal deterministic SVG charts (bars and polylines).

Hand-rolled so that repeated runs with identical data produce bit-identical
files; plotting libraries embed run-dependent ids and timestamps.
"""

from __future__ import annotations

import os

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 70


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{_esc(title)}</text>',
    ]


def _axes(lines: list[str]) -> None:
    lines.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        f'stroke="black" stroke-width="1"/>'
    )
    lines.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
        f'stroke="black" stroke-width="1"/>'
    )


def bar_chart(path: str, labels: list[str], values: list[float], title: str,
              y_label: str = "") -> None:
    lines = _header(title)
    _axes(lines)
    vmax = max(max(values), 1e-12) if values else 1.0
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    n = max(len(values), 1)
    bw = plot_w / n
    for i, (label, v) in enumerate(zip(labels, values)):
        h = plot_h * (v / vmax)
        x = _ML + i * bw
        y = _H - _MB - h
        lines.append(
            f'<rect x="{x + 0.1 * bw:.2f}" y="{y:.2f}" width="{0.8 * bw:.2f}" '
            f'height="{h:.2f}" fill="#4878a8"/>'
        )
        lines.append(
            f'<text x="{x + 0.5 * bw:.2f}" y="{_H - _MB + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10" '
            f'transform="rotate(30 {x + 0.5 * bw:.2f} {_H - _MB + 16})">{_esc(str(label))}</text>'
        )
        lines.append(
            f'<text x="{x + 0.5 * bw:.2f}" y="{y - 4:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{v:g}</text>'
        )
    if y_label:
        lines.append(
            f'<text x="16" y="{_H / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="12" transform="rotate(-90 16 {_H / 2:.1f})">{_esc(y_label)}</text>'
        )
    lines.append("</svg>")
    _write(path, lines)


def line_chart(path: str, series: dict[str, list[tuple[float, float]]], title: str,
               x_label: str = "", y_label: str = "",
               x_range: tuple[float, float] = (0.0, 1.0),
               y_range: tuple[float, float] = (0.0, 1.0)) -> None:
    lines = _header(title)
    _axes(lines)
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    x0, x1 = x_range
    y0, y1 = y_range
    colors = ["#4878a8", "#a84848", "#48a860", "#a88c48", "#7848a8", "#48a0a8"]
    for idx, (name, pts) in enumerate(sorted(series.items())):
        if not pts:
            continue
        coords = []
        for x, y in pts:
            px = _ML + plot_w * (x - x0) / max(x1 - x0, 1e-12)
            py = _H - _MB - plot_h * (y - y0) / max(y1 - y0, 1e-12)
            coords.append(f"{px:.2f},{py:.2f}")
        color = colors[idx % len(colors)]
        lines.append(
            f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        lines.append(
            f'<text x="{_W - _MR - 4}" y="{_MT + 14 * (idx + 1)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="{color}">{_esc(name)}</text>'
        )
    for label, pos in ((x_label, "x"), (y_label, "y")):
        if not label:
            continue
        if pos == "x":
            lines.append(
                f'<text x="{_ML + plot_w / 2:.1f}" y="{_H - 12}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12">{_esc(label)}</text>'
            )
        else:
            lines.append(
                f'<text x="16" y="{_H / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
                f'font-size="12" transform="rotate(-90 16 {_H / 2:.1f})">{_esc(label)}</text>'
            )
    lines.append("</svg>")
    _write(path, lines)


def _write(path: str, lines: list[str]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
