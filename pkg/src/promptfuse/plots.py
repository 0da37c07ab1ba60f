"""Dependency-free SVG bar charts for experiment CSVs.

Each bar rect carries a data-value attribute and a geometric height of
value * Y_SCALE pixels, so emitted charts can be parsed back and checked
against the numbers they were drawn from.
"""

from __future__ import annotations

from pathlib import Path

Y_SCALE = 300.0          # pixels per metric unit (metrics live in [0, 1])
BAR_WIDTH = 26
BAR_GAP = 8
GROUP_GAP = 36
MARGIN = 60
PALETTE = ("#4878cf", "#ee854a", "#6acc65", "#d65f5f")


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def grouped_bar_chart(rows: list[dict], metrics: list[str], title: str, path) -> Path:
    """One group of bars per row (setting), one bar per metric."""
    if not rows:
        raise ValueError("no rows to plot")
    group_w = len(metrics) * (BAR_WIDTH + BAR_GAP) - BAR_GAP
    width = MARGIN * 2 + len(rows) * (group_w + GROUP_GAP) - GROUP_GAP
    height = int(Y_SCALE) + 2 * MARGIN
    base_y = MARGIN + Y_SCALE

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'data-y-scale="{Y_SCALE}">',
        f'<title>{_esc(title)}</title>',
        f'<text x="{width / 2}" y="{MARGIN / 2}" text-anchor="middle" '
        f'font-size="16">{_esc(title)}</text>',
        f'<line x1="{MARGIN}" y1="{base_y}" x2="{width - MARGIN}" y2="{base_y}" '
        f'stroke="#333"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = base_y - tick * Y_SCALE
        parts.append(f'<line x1="{MARGIN - 4}" y1="{y}" x2="{MARGIN}" y2="{y}" stroke="#333"/>')
        parts.append(f'<text x="{MARGIN - 8}" y="{y + 4}" text-anchor="end" '
                     f'font-size="10">{tick:g}</text>')

    x = MARGIN
    for row in rows:
        for k, metric in enumerate(metrics):
            value = float(row[metric])
            bar_h = value * Y_SCALE
            parts.append(
                f'<rect class="bar" x="{x:.2f}" y="{base_y - bar_h:.2f}" '
                f'width="{BAR_WIDTH}" height="{bar_h:.4f}" fill="{PALETTE[k % len(PALETTE)]}" '
                f'data-setting="{_esc(row["setting"])}" data-metric="{_esc(metric)}" '
                f'data-value="{value:.6f}"/>')
            x += BAR_WIDTH + BAR_GAP
        label_x = x - BAR_GAP - group_w / 2
        parts.append(f'<text x="{label_x:.2f}" y="{base_y + 16}" text-anchor="middle" '
                     f'font-size="11">{_esc(row["setting"])}</text>')
        x += GROUP_GAP - BAR_GAP

    legend_x = MARGIN
    for k, metric in enumerate(metrics):
        parts.append(f'<rect x="{legend_x}" y="{height - 24}" width="12" height="12" '
                     f'fill="{PALETTE[k % len(PALETTE)]}"/>')
        parts.append(f'<text x="{legend_x + 16}" y="{height - 14}" '
                     f'font-size="11">{_esc(metric)}</text>')
        legend_x += 90
    parts.append("</svg>")

    path = Path(path)
    path.write_text("\n".join(parts), encoding="utf-8")
    return path


def parse_bar_values(path) -> list[dict]:
    """Recover (setting, metric, value, height) from an emitted chart."""
    import xml.etree.ElementTree as ET

    root = ET.parse(Path(path)).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    out = []
    for rect in root.iter(f"{ns}rect"):
        if rect.get("class") != "bar":
            continue
        out.append({
            "setting": rect.get("data-setting"),
            "metric": rect.get("data-metric"),
            "value": float(rect.get("data-value")),
            "height": float(rect.get("height")),
        })
    return out
