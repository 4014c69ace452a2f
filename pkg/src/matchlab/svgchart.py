"""Minimal self-contained SVG line charts (no plotting dependency)."""

from __future__ import annotations

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]

WIDTH = 760
HEIGHT = 440
MARGIN_LEFT = 64
MARGIN_RIGHT = 180
MARGIN_TOP = 48
MARGIN_BOTTOM = 56


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def line_chart(title: str, x_label: str, y_label: str,
               series: list[tuple[str, list[float], list[float]]]) -> str:
    """SVG document for named (xs, ys) series sharing one axis pair.

    The y axis always starts at 0 so rate curves read directly as fractions.
    """
    if not series:
        raise ValueError("need at least one series")
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("series contain no points")
    x_min, x_max = min(xs_all), max(xs_all)
    y_max = max(max(ys_all), 1e-9) * 1.1
    plot_l, plot_r = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    plot_t, plot_b = MARGIN_TOP, HEIGHT - MARGIN_BOTTOM

    def px(x: float) -> float:
        if x_max == x_min:
            return (plot_l + plot_r) / 2.0
        return plot_l + (x - x_min) / (x_max - x_min) * (plot_r - plot_l)

    def py(y: float) -> float:
        return plot_b - y / y_max * (plot_b - plot_t)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2:.1f}" y="26" text-anchor="middle" font-size="17" '
        f'font-family="Helvetica,Arial,sans-serif">{_escape(title)}</text>',
    ]
    for i in range(6):
        y_val = y_max * i / 5
        yp = py(y_val)
        parts.append(f'<line x1="{plot_l}" y1="{yp:.2f}" x2="{plot_r}" y2="{yp:.2f}" '
                     'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{plot_l - 8}" y="{yp + 4:.2f}" text-anchor="end" '
                     f'font-size="11" font-family="Helvetica,Arial,sans-serif">{y_val:.3g}</text>')
    ticks = sorted({x_min, x_max, round((x_min + x_max) / 2)})
    for t in ticks:
        xp = px(t)
        parts.append(f'<line x1="{xp:.2f}" y1="{plot_b}" x2="{xp:.2f}" y2="{plot_b + 5}" '
                     'stroke="#000000" stroke-width="1"/>')
        parts.append(f'<text x="{xp:.2f}" y="{plot_b + 20}" text-anchor="middle" '
                     f'font-size="11" font-family="Helvetica,Arial,sans-serif">{t:g}</text>')
    parts.append(f'<line x1="{plot_l}" y1="{plot_b}" x2="{plot_r}" y2="{plot_b}" '
                 'stroke="#000000" stroke-width="1.5"/>')
    parts.append(f'<line x1="{plot_l}" y1="{plot_t}" x2="{plot_l}" y2="{plot_b}" '
                 'stroke="#000000" stroke-width="1.5"/>')
    for idx, (name, xs, ys) in enumerate(series):
        color = COLORS[idx % len(COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = plot_t + 10 + idx * 20
        lx = plot_r + 14
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 26}" y="{ly + 4}" font-size="12" '
                     f'font-family="Helvetica,Arial,sans-serif">{_escape(name)}</text>')
    parts.append(f'<text x="{(plot_l + plot_r) / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle" '
                 f'font-size="13" font-family="Helvetica,Arial,sans-serif">{_escape(x_label)}</text>')
    parts.append(f'<text x="18" y="{(plot_t + plot_b) / 2:.1f}" text-anchor="middle" '
                 f'font-size="13" font-family="Helvetica,Arial,sans-serif" '
                 f'transform="rotate(-90 18 {(plot_t + plot_b) / 2:.1f})">{_escape(y_label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
