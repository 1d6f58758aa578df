"""
SVG line plots of one-dimensional rate fields and grid functions.
"""
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from jinja2 import Environment, FileSystemLoader

from ldlab.error_handlers import ExitCodes, UsageError2
from ldlab.services.metrics import PerformanceTimer, metrics_collector
from ldlab.services.storage import read_curve

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
templates = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), autoescape=True,
                        trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)

WIDTH, HEIGHT = 640, 400
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 60, 20, 30, 40
COLORS = ("#1f4e9c", "#c0392b", "#2e8b57")
MAX_CURVES = len(COLORS)

Curve = Tuple[str, np.ndarray, np.ndarray]


def nice_ticks(lower: float, upper: float, count: int = 6) -> List[float]:
    """Round tick positions (1, 2 or 5 times a power of ten) covering [lower, upper]"""
    span = upper - lower
    raw = span / count
    magnitude = 10.0 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw)
    first = math.ceil(lower / step - 1e-9)
    ticks = []
    k = first
    while k * step <= upper + 1e-9 * step:
        ticks.append(0.0 if k == 0 else round(k * step, 10))
        k += 1
    return ticks


def _data_range(values: List[np.ndarray]) -> Tuple[float, float]:
    finite = np.concatenate([v[np.isfinite(v)] for v in values])
    if finite.size == 0:
        return -1.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi - lo < 1e-12:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_plot(curves: Sequence[Curve], title: str = "") -> str:
    """Deterministic SVG overlay of up to three curves; non-finite values break the polyline"""
    if not curves:
        raise UsageError2("At least one curve is required")
    if len(curves) > MAX_CURVES:
        raise UsageError2(f"At most {MAX_CURVES} curves can be overlaid (got {len(curves)})")
    x_lo = min(float(x.min()) for _, x, _ in curves)
    x_hi = max(float(x.max()) for _, x, _ in curves)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    y_lo, y_hi = _data_range([y for _, _, y in curves])

    frame = {"left": MARGIN_LEFT, "top": MARGIN_TOP, "right": WIDTH - MARGIN_RIGHT,
             "bottom": HEIGHT - MARGIN_BOTTOM, "width": WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
             "height": HEIGHT - MARGIN_TOP - MARGIN_BOTTOM}

    def px(x: float) -> float:
        return frame["left"] + (x - x_lo) / (x_hi - x_lo) * frame["width"]

    def py(y: float) -> float:
        return frame["bottom"] - (y - y_lo) / (y_hi - y_lo) * frame["height"]

    rendered = []
    for (label, x, y), color in zip(curves, COLORS):
        segments, current = [], []
        for xi, yi in zip(x, y):
            if math.isfinite(yi):
                current.append(f"{px(xi):.2f},{py(yi):.2f}")
            elif current:
                segments.append(" ".join(current))
                current = []
        if current:
            segments.append(" ".join(current))
        rendered.append({"label": label, "color": color, "segments": segments})

    x_ticks = [{"pos": f"{px(t):.2f}", "label": f"{t:g}"} for t in nice_ticks(x_lo, x_hi)]
    y_ticks = [{"pos": f"{py(t):.2f}", "label": f"{t:g}"} for t in nice_ticks(y_lo, y_hi)]
    return templates.get_template("plot.svg.j2").render(
        width=WIDTH, height=HEIGHT, frame=frame, curves=rendered,
        x_ticks=x_ticks, y_ticks=y_ticks, title=title)


def cmd_plot(inputs: Sequence[str], out: str, labels: Optional[Sequence[str]] = None,
             title: str = "") -> Tuple[int, Dict[str, Any]]:
    """Overlay the curves stored in the given CSV files"""
    labels = list(labels or [])
    if labels and len(labels) != len(inputs):
        raise UsageError2("Give one label per input file")
    curves = []
    for i, path in enumerate(inputs):
        x, y = read_curve(path)
        curves.append((labels[i] if labels else Path(path).stem, x, y))
    timer = PerformanceTimer("io/plot")
    with timer:
        svg = render_plot(curves, title)
        target = Path(out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(svg)
    metrics_collector.record("io", "plot", timer.get_duration_ms(), {"curves": len(curves)})
    logger.info(f"Plotted {len(curves)} curves to {target}")
    return ExitCodes.CERTIFIED, {"curves": len(curves), "files": [str(target)]}
