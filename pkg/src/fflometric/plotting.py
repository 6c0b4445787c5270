"""Static SVG emission for result series; byte-deterministic for fixed inputs."""

from __future__ import annotations

import io

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 55

_COLORS = ("#1f5fa8", "#c23b22", "#2e8540", "#7b4fa6", "#b8860b", "#444444")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


class _Scale:
    def __init__(self, lo, hi, out_lo, out_hi):
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi = lo, hi
        self.out_lo, self.out_hi = out_lo, out_hi

    def __call__(self, x: float) -> float:
        f = (x - self.lo) / (self.hi - self.lo)
        return self.out_lo + f * (self.out_hi - self.out_lo)


def svg_chart(
    series: list[tuple[str, list[tuple[float, float]]]],
    title: str,
    xlabel: str,
    ylabel: str,
    pc_marker: float | None = None,
) -> str:
    """Line+marker chart of one or more (label, [(x, y), ...]) series."""
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    if not xs:
        raise ValueError("nothing to plot")
    pad_y = 0.05 * (max(ys) - min(ys)) if max(ys) > min(ys) else 0.05
    sx = _Scale(min(xs), max(xs), MARGIN_L, WIDTH - MARGIN_R)
    sy = _Scale(min(ys) - pad_y, max(ys) + pad_y, HEIGHT - MARGIN_B, MARGIN_T)

    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
    )
    out.write(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n')
    out.write(
        f'<text x="{WIDTH / 2:g}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>\n'
    )
    # axes
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    x1, y1 = WIDTH - MARGIN_R, MARGIN_T
    out.write(
        f'<path d="M {x0} {y1} L {x0} {y0} L {x1} {y0}" stroke="black" '
        f'fill="none" stroke-width="1"/>\n'
    )
    for tx in _ticks(sx.lo, sx.hi):
        px = sx(tx)
        out.write(
            f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 5}" '
            f'stroke="black"/>\n'
            f'<text x="{_fmt(px)}" y="{y0 + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(tx)}</text>\n'
        )
    for ty in _ticks(sy.lo, sy.hi):
        py = sy(ty)
        out.write(
            f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" '
            f'stroke="black"/>\n'
            f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(ty)}</text>\n'
        )
    out.write(
        f'<text x="{(x0 + x1) / 2:g}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>\n'
    )
    out.write(
        f'<text x="18" y="{(y0 + y1) / 2:g}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {(y0 + y1) / 2:g})">{ylabel}</text>\n'
    )
    for idx, (label, pts) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        pts = sorted(pts)
        if len(pts) > 1:
            path = " ".join(
                f"{'M' if i == 0 else 'L'} {_fmt(sx(x))} {_fmt(sy(y))}"
                for i, (x, y) in enumerate(pts)
            )
            out.write(
                f'<path d="{path}" stroke="{color}" fill="none" '
                f'stroke-width="1.5"/>\n'
            )
        for x, y in pts:
            out.write(
                f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3.5" '
                f'fill="{color}"/>\n'
            )
        if label:
            ly = MARGIN_T + 16 + 16 * idx
            out.write(
                f'<rect x="{x1 - 150}" y="{ly - 9}" width="10" height="10" '
                f'fill="{color}"/>\n'
                f'<text x="{x1 - 135}" y="{ly}" font-family="sans-serif" '
                f'font-size="12">{label}</text>\n'
            )
    if pc_marker is not None and series:
        # user-supplied critical polarization, marked on the first series
        pts = sorted(series[0][1])
        y_at = _interp(pts, pc_marker)
        out.write(
            f'<rect x="{_fmt(sx(pc_marker) - 5)}" y="{_fmt(sy(y_at) - 5)}" '
            f'width="10" height="10" fill="black"/>\n'
        )
    out.write("</svg>\n")
    return out.getvalue()


def _interp(pts: list[tuple[float, float]], x: float) -> float:
    if x <= pts[0][0]:
        return pts[0][1]
    for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
        if xa <= x <= xb:
            if xb == xa:
                return ya
            return ya + (yb - ya) * (x - xa) / (xb - xa)
    return pts[-1][1]


def plot_script(data_csv_name: str, title: str, xlabel: str, ylabel: str) -> str:
    """Companion matplotlib script for the data+script output mode."""
    return f'''"""Plot {data_csv_name} (generated alongside the data file)."""
import csv
import matplotlib.pyplot as plt

xs, ys = [], []
with open("{data_csv_name}") as fh:
    for row in csv.DictReader(fh):
        cols = list(row.values())
        xs.append(float(cols[0]))
        ys.append(float(cols[1]))

fig, ax = plt.subplots()
ax.plot(xs, ys, "o-")
ax.set_title({title!r})
ax.set_xlabel({xlabel!r})
ax.set_ylabel({ylabel!r})
fig.savefig("{data_csv_name}.png", dpi=150)
'''
