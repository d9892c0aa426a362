"""Agreement and screening statistics for paired fat-fraction measurements.

Values flow in fat-fraction percentage points throughout. Differences are
always method_a minus method_b, and when a threshold is involved method_a
acts as the ground truth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

NAFLD_THRESHOLD = 5.5


@dataclass
class PairedMeasurements:
    ids: list[str]
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.ids = [str(i) for i in self.ids]
        n = len(self.ids)
        if not (len(self.a) == len(self.b) == n):
            raise ValueError("ids, a and b must have equal lengths")
        if n < 2:
            raise ValueError("need at least 2 paired measurements")
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all()):
            raise ValueError("measurements must be finite")

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass
class MetricsReport:
    mae: float
    r2: float
    pearson_r: float
    loa_low: float
    loa_high: float
    roc_auc: float
    sensitivity: float
    specificity: float
    threshold: float
    n: int


def mae(p: PairedMeasurements) -> float:
    return float(np.mean(np.abs(p.a - p.b)))


def r2(p: PairedMeasurements) -> float:
    """Coefficient of determination with method_a as the reference."""
    ss_res = float(np.sum((p.a - p.b) ** 2))
    ss_tot = float(np.sum((p.a - p.a.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("reference series is constant")
    return 1.0 - ss_res / ss_tot


def pearson_r(p: PairedMeasurements) -> float:
    da = p.a - p.a.mean()
    db = p.b - p.b.mean()
    denom = np.sqrt(np.sum(da**2) * np.sum(db**2))
    if denom == 0:
        raise ValueError("zero variance in one series")
    return float(np.sum(da * db) / denom)


def loa(p: PairedMeasurements) -> tuple[float, float]:
    """95% limits of agreement of (a - b), sample SD with n-1 denominator."""
    d = p.a - p.b
    m = float(d.mean())
    s = float(d.std(ddof=1))
    return (m - 1.96 * s, m + 1.96 * s)


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties at 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(scores)
    u = float(ranks[labels].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def screen_at_threshold(
    p: PairedMeasurements, threshold: float = NAFLD_THRESHOLD
) -> tuple[float, float]:
    """(sensitivity, specificity) for b > threshold against labels a > threshold."""
    labels = p.a > threshold
    preds = p.b > threshold
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("screening needs both classes present in method_a")
    tp = int((labels & preds).sum())
    tn = int((~labels & ~preds).sum())
    return tp / n_pos, tn / n_neg


def bland_altman_data(p: PairedMeasurements):
    """((mean, difference) per subject, (loa_low, loa_high))."""
    means = (p.a + p.b) / 2.0
    diffs = p.a - p.b
    return list(zip(means.tolist(), diffs.tolist())), loa(p)


def top_outliers(p: PairedMeasurements, k: int = 10) -> list[tuple[str, float]]:
    """Subjects ranked by |a - b| descending, ties broken by ascending id."""
    err = np.abs(p.a - p.b)
    order = sorted(range(p.n), key=lambda i: (-err[i], p.ids[i]))
    return [(p.ids[i], float(err[i])) for i in order[:k]]


def compute_report(
    p: PairedMeasurements, threshold: float = NAFLD_THRESHOLD
) -> MetricsReport:
    lo, hi = loa(p)
    sens, spec = screen_at_threshold(p, threshold)
    return MetricsReport(
        mae=mae(p),
        r2=r2(p),
        pearson_r=pearson_r(p),
        loa_low=lo,
        loa_high=hi,
        roc_auc=roc_auc(p.b, p.a > threshold),
        sensitivity=sens,
        specificity=spec,
        threshold=threshold,
        n=p.n,
    )


def load_paired_csv(path) -> PairedMeasurements:
    """Read (subject_id, method_a, method_b) rows with a header line."""
    ids, a, b = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["subject_id"])
            a.append(float(row["method_a"]))
            b.append(float(row["method_b"]))
    return PairedMeasurements(ids, np.array(a), np.array(b))


def write_metrics_csv(rows: list[tuple[str, MetricsReport]], path) -> None:
    """One row per method pair, columns in the comparison-table order.

    Sensitivity and specificity are stored as fractions; renderers format
    percentages.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "pair",
                "n",
                "mae",
                "r2",
                "loa_low",
                "loa_high",
                "roc_auc",
                "sensitivity",
                "specificity",
                "pearson_r",
            ]
        )
        for name, r in rows:
            w.writerow(
                [
                    name,
                    r.n,
                    f"{r.mae:.6f}",
                    f"{r.r2:.6f}",
                    f"{r.loa_low:.6f}",
                    f"{r.loa_high:.6f}",
                    f"{r.roc_auc:.6f}",
                    f"{r.sensitivity:.6f}",
                    f"{r.specificity:.6f}",
                    f"{r.pearson_r:.6f}",
                ]
            )


def bland_altman_svg(p: PairedMeasurements, path, title: str = "") -> None:
    """Scatter of differences vs means with dashed limit-of-agreement lines.

    Hand-rolled SVG so reruns are byte-identical.
    """
    pts, (lo, hi) = bland_altman_data(p)
    means = np.array([m for m, _ in pts])
    diffs = np.array([d for _, d in pts])
    bias = float(diffs.mean())

    width, height, margin = 640, 420, 50
    x0, x1 = float(means.min()), float(means.max())
    y_all = np.concatenate([diffs, [lo, hi]])
    y0, y1 = float(y_all.min()), float(y_all.max())
    x_pad = 0.05 * (x1 - x0) or 1.0
    y_pad = 0.10 * (y1 - y0) or 1.0
    x0, x1 = x0 - x_pad, x1 + x_pad
    y0, y1 = y0 - y_pad, y1 + y_pad

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="black"/>',
    ]
    if title:
        lines.append(
            f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
            f'font-size="14">{title}</text>'
        )
    for value, dash, color in ((bias, "", "red"), (lo, "8,6", "gray"), (hi, "8,6", "gray")):
        y = sy(value)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        lines.append(
            f'<line x1="{margin}" y1="{y:.2f}" x2="{width - margin}" y2="{y:.2f}" '
            f'stroke="{color}"{dash_attr}/>'
        )
        lines.append(
            f'<text x="{width - margin + 4}" y="{y + 4:.2f}" font-size="10">'
            f"{value:.2f}</text>"
        )
    for m, d in pts:
        lines.append(
            f'<circle cx="{sx(m):.2f}" cy="{sy(d):.2f}" r="2.5" '
            f'fill="steelblue" fill-opacity="0.6"/>'
        )
    lines.append(
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">mean of methods (FF points)</text>'
    )
    lines.append("</svg>")
    Path_text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(Path_text)
