"""Minimal SVG line plots for scan curves, written without plotting libraries."""

from __future__ import annotations

from html import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


class Panel:
    def __init__(self, x0, y0, w, h, xlim, ylim, title, ylabel):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim = _pad(xlim)
        self.ylim = _pad(ylim)
        self.title = title
        self.ylabel = ylabel
        self.items: list[str] = []

    def sx(self, x):
        a, b = self.xlim
        return self.x0 + (x - a) / (b - a) * self.w

    def sy(self, y):
        a, b = self.ylim
        return self.y0 + self.h - (y - a) / (b - a) * self.h

    def shade(self, lo, hi):
        x1, x2 = self.sx(lo), self.sx(hi)
        self.items.append(
            f'<rect x="{x1:.2f}" y="{self.y0}" width="{max(x2 - x1, 1.0):.2f}" height="{self.h}" '
            'fill="#cccccc" fill-opacity="0.5"/>'
        )

    def series(self, xs, ys, errs, color, label, k):
        pts = " ".join(f"{self.sx(x):.2f},{self.sy(y):.2f}" for x, y in zip(xs, ys))
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y, e in zip(xs, ys, errs):
            X = self.sx(x)
            self.items.append(
                f'<line x1="{X:.2f}" y1="{self.sy(y - e):.2f}" x2="{X:.2f}" y2="{self.sy(y + e):.2f}" '
                f'stroke="{color}"/>'
            )
            self.items.append(f'<circle cx="{X:.2f}" cy="{self.sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = self.y0 + 14 + 14 * k
        lx = self.x0 + self.w - 150
        self.items.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" '
                          'stroke-width="2"/>')
        self.items.append(f'<text x="{lx + 24}" y="{ly}" font-size="11">{escape(label)}</text>')

    def render(self) -> str:
        x0, y0, w, h = self.x0, self.y0, self.w, self.h
        out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="black"/>']
        out += self.items
        for k in range(5):
            xv = self.xlim[0] + k * (self.xlim[1] - self.xlim[0]) / 4
            yv = self.ylim[0] + k * (self.ylim[1] - self.ylim[0]) / 4
            out.append(f'<text x="{self.sx(xv):.2f}" y="{y0 + h + 14}" font-size="10" '
                       f'text-anchor="middle">{xv:.3g}</text>')
            out.append(f'<text x="{x0 - 6}" y="{self.sy(yv) + 3:.2f}" font-size="10" '
                       f'text-anchor="end">{yv:.3g}</text>')
        out.append(f'<text x="{x0 + w / 2}" y="{y0 - 8}" font-size="13" text-anchor="middle">'
                   f'{escape(self.title)}</text>')
        out.append(f'<text x="{x0 - 48}" y="{y0 + h / 2}" font-size="11" text-anchor="middle" '
                   f'transform="rotate(-90 {x0 - 48} {y0 + h / 2})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{x0 + w / 2}" y="{y0 + h + 30}" font-size="11" text-anchor="middle">β</text>')
        return "\n".join(out)


def _pad(lim):
    a, b = float(lim[0]), float(lim[1])
    if b <= a:
        a, b = a - 0.5, b + 0.5
    p = 0.05 * (b - a)
    return a - p, b + p


def scan_svg(curve, gap=None, title: str = "") -> str:
    """Energy and block-density curves against β, bracket shaded."""
    starts = curve.starts()
    betas = curve.betas or [0.0, 1.0]
    xlim = (min(betas), max(betas))
    es = [r.energy_mean for r in curve.rows] or [0.0]
    p1 = Panel(80, 40, 560, 220, xlim, (min(es), max(es)), f"energy density {title}".strip(), "energy / site")
    # densities worth drawing: the bad event and goods that ever exceed 5%
    shown = [e for e in curve.events if any(r.rho[e] >= 0.05 for r in curve.rows)]
    p2 = Panel(80, 320, 560, 220, xlim, (0.0, 1.0), "block-event densities", "ρ")
    if gap is not None and gap.bracket is not None:
        p1.shade(*gap.bracket)
        p2.shade(*gap.bracket)
    k = 0
    for i, s in enumerate(starts):
        rows = curve.branch(s)
        xs = [r.beta for r in rows]
        p1.series(xs, [r.energy_mean for r in rows], [r.energy_err for r in rows], COLORS[i % len(COLORS)], s, i)
        for e in shown + ["bad"]:
            ys = [r.rho_bad if e == "bad" else r.rho[e] for r in rows]
            er = [r.rho_bad_err if e == "bad" else r.rho_err[e] for r in rows]
            p2.series(xs, ys, er, COLORS[k % len(COLORS)], f"{e} ({s})", k)
            k += 1
    body = p1.render() + "\n" + p2.render()
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" width="700" height="600" font-family="sans-serif">\n'
        '<rect width="100%" height="100%" fill="white"/>\n' + body + "\n</svg>\n"
    )
