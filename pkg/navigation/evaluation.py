import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .config import EvaluationParams
from .geometry import as_points, nearest_distances, resample_polyline

logger = logging.getLogger(__name__)

LABELS = ('p_path', 'r_path', 's_path')
METRICS = ('h_directional', 'h_average')
FLOAT_FORMAT = '%.6f'


@dataclass(eq=False)
class PathTrace:
    """A logged trajectory: strictly increasing timestamps and at least two points"""
    label: str
    t: np.ndarray
    xy: np.ndarray

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown path label '{self.label}'")
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.xy = as_points(self.xy, 2)
        if len(self.t) != len(self.xy):
            raise ValueError("timestamps and positions differ in length")
        if len(self.t) < 2:
            raise ValueError(f"{self.label} needs at least 2 points")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError(f"{self.label} timestamps must be strictly increasing")

    @classmethod
    def from_frame(cls, label: str, frame: pd.DataFrame) -> 'PathTrace':
        return cls(label, frame['t'].to_numpy(), frame[['x', 'y']].to_numpy())

    @classmethod
    def from_polyline(cls, label: str, points, speed: float) -> 'PathTrace':
        """Trace that walks ``points`` at constant ``speed``"""
        pts = as_points(points, 2)
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return cls(label, np.concatenate(([0.0], np.cumsum(steps))) / speed, pts)

    @classmethod
    def read_csv(cls, path: str, label: Optional[str] = None) -> 'PathTrace':
        frame = pd.read_csv(path)
        if label is None:
            stem = os.path.splitext(os.path.basename(path))[0]
            label = stem if stem in LABELS else stem.rsplit('_', 1)[0]
        return cls.from_frame(label, frame)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.t, 'x': self.xy[:, 0], 'y': self.xy[:, 1]})

    def write_csv(self, path: str):
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)

    def resampled(self, spacing: float = 0.1) -> np.ndarray:
        """Point set at fixed arc-length spacing, the input of both metrics"""
        return resample_polyline(self.xy, spacing)


@dataclass(frozen=True)
class HausdorffReport:
    h_directional: float
    h_average: float
    n_points: int


def h_directional(p_path, p2) -> float:
    """Directional Hausdorff distance: max over p_path of the distance to the nearest p2 point"""
    return float(nearest_distances(p_path, p2).max())


def h_average(p_path, p2) -> float:
    """Mean over p_path of the distance to the nearest p2 point"""
    return float(nearest_distances(p_path, p2).mean())


def hausdorff_report(p_path, p2) -> HausdorffReport:
    distances = nearest_distances(p_path, p2)
    return HausdorffReport(float(distances.max()), float(distances.mean()), len(distances))


def welch_test(a: Sequence[float], b: Sequence[float]) -> tuple:
    """Two-sided Welch t-test; NaN when either sample has fewer than two values"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        return float('nan'), float('nan')
    result = stats.ttest_ind(a, b, equal_var=False)
    return float(result.statistic), float(result.pvalue)


@dataclass
class TrialComparison:
    pairwise: pd.DataFrame
    summary: pd.DataFrame
    boxplot: pd.DataFrame
    t_tests: pd.DataFrame


def _summarize(pairwise: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for (comparison, metric), values in pairwise.groupby(['comparison', 'metric'], sort=True)['value']:
        rows.append({
            'comparison': comparison,
            'metric': metric,
            'n': int(values.count()),
            'mean': values.mean(),
            'sd': values.std(ddof=1) if len(values) > 1 else float('nan'),
            'min': values.min(),
            'q1': values.quantile(0.25),
            'median': values.median(),
            'q3': values.quantile(0.75),
            'max': values.max(),
        })
    return pd.DataFrame(rows)


def compare_trials(p_traces: Sequence[PathTrace], r_traces: Sequence[PathTrace], s_trace: PathTrace,
                   params: EvaluationParams = EvaluationParams()) -> TrialComparison:
    """
    Compare every pedestrian trial with every robot trial and with the shortest path

    Args:
        p_traces (Sequence[PathTrace]): comparison pedestrian paths, the metric source
        r_traces (Sequence[PathTrace]): robot paths
        s_trace (PathTrace): shortest path
        params (EvaluationParams): resampling spacing and significance level

    Returns:
        TrialComparison: pairwise values, summary statistics, box-plot
        quantiles (whiskers at min/max) and Welch tests of P-R against P-S
    """
    if not p_traces or not r_traces:
        raise ValueError("need at least one pedestrian and one robot trace")

    spacing = params.resample_spacing
    pedestrians = [trace.resampled(spacing) for trace in p_traces]
    robots = [trace.resampled(spacing) for trace in r_traces]
    shortest = s_trace.resampled(spacing)

    rows = []
    for pi, p_points in enumerate(pedestrians):
        for ri, r_points in enumerate(robots):
            report = hausdorff_report(p_points, r_points)
            rows.append(('P-R', pi, ri, 'h_directional', report.h_directional))
            rows.append(('P-R', pi, ri, 'h_average', report.h_average))
        report = hausdorff_report(p_points, shortest)
        rows.append(('P-S', pi, -1, 'h_directional', report.h_directional))
        rows.append(('P-S', pi, -1, 'h_average', report.h_average))
    pairwise = pd.DataFrame(rows, columns=['comparison', 'p_trial', 'other_trial', 'metric', 'value'])

    summary = _summarize(pairwise)
    boxplot = summary[['comparison', 'metric', 'min', 'q1', 'median', 'q3', 'max']].rename(
        columns={'min': 'whisker_low', 'max': 'whisker_high'}
    )

    tests = []
    for metric in METRICS:
        selected = pairwise[pairwise['metric'] == metric]
        pr = selected[selected['comparison'] == 'P-R']['value']
        ps = selected[selected['comparison'] == 'P-S']['value']
        statistic, p_value = welch_test(pr, ps)
        tests.append({
            'metric': metric,
            'mean_pr': pr.mean(),
            'mean_ps': ps.mean(),
            't': statistic,
            'p_value': p_value,
            'significant': bool(p_value < params.significance) if np.isfinite(p_value) else False,
        })
    logger.info("Compared %d pedestrian and %d robot trace(s)", len(pedestrians), len(robots))
    return TrialComparison(pairwise, summary, boxplot, pd.DataFrame(tests))


def format_report(comparison: TrialComparison) -> str:
    """Plain-text table: one row per comparison, mean (SD) per metric, then the t-tests"""
    summary = comparison.summary.set_index(['comparison', 'metric'])
    lines = [f"{'':<6}{'h_directional (m)':>22}{'h_average (m)':>22}"]
    for comparison_name in ('P-R', 'P-S'):
        cells = []
        for metric in METRICS:
            row = summary.loc[(comparison_name, metric)]
            cells.append(f"{row['mean']:.4f} ({row['sd']:.4f})")
        lines.append(f"{comparison_name:<6}{cells[0]:>22}{cells[1]:>22}")
    lines.append('')
    for _, test in comparison.t_tests.iterrows():
        lines.append(
            f"{test['metric']}: P-R {test['mean_pr']:.4f} vs P-S {test['mean_ps']:.4f}, "
            f"Welch t={test['t']:.4f}, p={test['p_value']:.3g}"
        )
    return '\n'.join(lines) + '\n'


def write_report(comparison: TrialComparison, out_dir: str) -> Dict[str, str]:
    """Write the metric files into ``out_dir`` and return their paths by name"""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        'metrics_pairwise': comparison.pairwise,
        'metrics_summary': comparison.summary,
        'boxplot': comparison.boxplot,
        't_tests': comparison.t_tests,
    }
    paths = {}
    for name, frame in files.items():
        paths[name] = os.path.join(out_dir, f'{name}.csv')
        frame.to_csv(paths[name], index=False, float_format=FLOAT_FORMAT)
    paths['report'] = os.path.join(out_dir, 'report.txt')
    with open(paths['report'], 'w') as handle:
        handle.write(format_report(comparison))
    return paths


def load_traces(directory: str, label: str) -> List[PathTrace]:
    """Every ``<label>_NN.csv`` in a run directory, in trial order"""
    names = sorted(n for n in os.listdir(directory) if n.startswith(f'{label}_') and n.endswith('.csv'))
    return [PathTrace.read_csv(os.path.join(directory, name), label) for name in names]
