"""Minimal deterministic SVG charts for sweep results (no plotting deps)."""

from __future__ import annotations

from .perf import SweepRow

__all__ = ["sweep_svg"]

_W, _H = 900, 420
_MARGIN_L, _MARGIN_B, _MARGIN_T = 70, 90, 30


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def sweep_svg(rows: list[SweepRow], title: str = "modeled GFlops") -> str:
    """Grouped bars (baseline vs adjusted) with the roofline as a tick."""
    if not rows:
        raise ValueError("no rows to chart")
    peak = max(max(r.tgemm_gflops, r.ftimm_gflops, r.roofline_gflops) for r in rows)
    peak = max(peak, 1e-9)
    plot_w = _W - _MARGIN_L - 20
    plot_h = _H - _MARGIN_B - _MARGIN_T
    group_w = plot_w / len(rows)
    bar_w = min(28.0, group_w / 3)

    def y(value: float) -> float:
        return _MARGIN_T + plot_h * (1 - value / peak)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN_L}" y1="{y(0)}" x2="{_W - 20}" y2="{y(0)}" '
        f'stroke="black"/>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" y2="{y(0)}" '
        f'stroke="black"/>',
    ]
    for frac in (0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{_MARGIN_L - 6}" y="{y(peak * frac) + 4}" text-anchor="end" '
            f'font-size="10">{_fmt(peak * frac)}</text>')
    for i, r in enumerate(rows):
        cx = _MARGIN_L + group_w * (i + 0.5)
        for dx, value, color in ((-bar_w, r.tgemm_gflops, "#888888"),
                                 (0, r.ftimm_gflops, "#2266cc")):
            parts.append(
                f'<rect x="{cx + dx:.1f}" y="{y(value):.1f}" width="{bar_w:.1f}" '
                f'height="{max(y(0) - y(value), 0):.1f}" fill="{color}"/>')
        parts.append(
            f'<line x1="{cx - bar_w:.1f}" y1="{y(r.roofline_gflops):.1f}" '
            f'x2="{cx + bar_w:.1f}" y2="{y(r.roofline_gflops):.1f}" '
            f'stroke="#cc3322" stroke-dasharray="4,2"/>')
        label = f"{r.shape.M}x{r.shape.N}x{r.shape.K}"
        parts.append(
            f'<text x="{cx:.1f}" y="{y(0) + 12:.1f}" text-anchor="end" '
            f'font-size="9" transform="rotate(-45 {cx:.1f} {y(0) + 12:.1f})">'
            f'{label}</text>')
    legend_y = _H - 14
    parts.extend([
        f'<rect x="{_MARGIN_L}" y="{legend_y - 9}" width="12" height="9" fill="#888888"/>',
        f'<text x="{_MARGIN_L + 16}" y="{legend_y}" font-size="11">baseline</text>',
        f'<rect x="{_MARGIN_L + 90}" y="{legend_y - 9}" width="12" height="9" fill="#2266cc"/>',
        f'<text x="{_MARGIN_L + 106}" y="{legend_y}" font-size="11">adjusted</text>',
        f'<line x1="{_MARGIN_L + 190}" y1="{legend_y - 4}" x2="{_MARGIN_L + 214}" '
        f'y2="{legend_y - 4}" stroke="#cc3322" stroke-dasharray="4,2"/>',
        f'<text x="{_MARGIN_L + 220}" y="{legend_y}" font-size="11">roofline</text>',
        "</svg>",
    ])
    return "\n".join(parts) + "\n"
