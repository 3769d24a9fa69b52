"""Minimal dependency-free SVG charts."""

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _frame(title, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
            f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>\n'
            + "\n".join(body) + "\n</svg>\n")


def _axes(body):
    x0, y0, x1, y1 = MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2, MARGIN
    body.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    body.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    return x0, y0, x1, y1


def bar_chart_svg(groups, categories, title, reference_totals=None, totals=None):
    """Grouped bars: one group per category, one bar per run in ``groups``."""
    body = []
    x0, y0, x1, y1 = _axes(body)
    vmax = max([v for vals in groups.values() for v in vals] + [1e-12])
    names = list(groups)
    slot = (x1 - x0) / len(categories)
    bar = slot * 0.8 / max(len(names), 1)
    for c, cat in enumerate(categories):
        cx = x0 + c * slot + slot * 0.1
        for r, name in enumerate(names):
            v = groups[name][c]
            hgt = (y0 - y1) * v / vmax
            body.append(f'<rect x="{cx + r * bar:.2f}" y="{y0 - hgt:.2f}" width="{bar:.2f}" '
                        f'height="{hgt:.2f}" fill="{COLORS[r % len(COLORS)]}"><title>{escape(name)}: {v:.3f}</title></rect>')
        body.append(f'<text x="{x0 + (c + 0.5) * slot:.2f}" y="{y0 + 18}" text-anchor="middle" '
                    f'font-size="12">{escape(cat)}</text>')
    body.append(f'<text x="{x0 - 6}" y="{y1 + 4}" text-anchor="end" font-size="11">{vmax:.3g}</text>')
    ly = y1
    for r, name in enumerate(names):
        label = name if totals is None else f"{name} (total {totals[name]:.2f})"
        body.append(f'<text x="{x1}" y="{ly + 14 * r}" text-anchor="end" font-size="11" '
                    f'fill="{COLORS[r % len(COLORS)]}">{escape(label)}</text>')
    if reference_totals:
        refs = ", ".join(f"{k} {v}" for k, v in reference_totals.items())
        body.append(f'<text x="{x0}" y="{HEIGHT - 12}" font-size="11" fill="gray">'
                    f'reference total MAE: {escape(refs)}</text>')
    return _frame(title, body)


def line_chart_svg(series, title, xlabel, ylabel):
    """Polylines for ``{name: [(x, y), ...]}``."""
    body = []
    x0, y0, x1, y1 = _axes(body)
    pts = [p for s in series.values() for p in s]
    if pts:
        xmin, xmax = min(p[0] for p in pts), max(p[0] for p in pts)
        ymin, ymax = min(0.0, min(p[1] for p in pts)), max(p[1] for p in pts)
        xspan = (xmax - xmin) or 1.0
        yspan = (ymax - ymin) or 1.0
        for r, (name, s) in enumerate(series.items()):
            coords = " ".join(f"{x0 + (x - xmin) / xspan * (x1 - x0):.2f},{y0 - (y - ymin) / yspan * (y0 - y1):.2f}"
                              for x, y in s)
            color = COLORS[r % len(COLORS)]
            body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
            body.append(f'<text x="{x1}" y="{y1 + 14 * r}" text-anchor="end" font-size="11" '
                        f'fill="{color}">{escape(name)}</text>')
        body.append(f'<text x="{x0 - 6}" y="{y1 + 4}" text-anchor="end" font-size="11">{ymax:.3g}</text>')
        body.append(f'<text x="{x1}" y="{y0 + 18}" text-anchor="end" font-size="11">{xmax:g}</text>')
    body.append(f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    body.append(f'<text x="14" y="{(y0 + y1) / 2}" font-size="12" transform="rotate(-90 14 {(y0 + y1) / 2})" '
                f'text-anchor="middle">{escape(ylabel)}</text>')
    return _frame(title, body)
