import logging
import os
from typing import List, Optional, Sequence

import matplotlib.pyplot as plt
import pandas as pd

from .evaluation import METRICS, PathTrace
from .world import SidewalkMap

logger = logging.getLogger(__name__)

# Set matplotlib backend to Agg for non-interactive environments
plt.switch_backend('Agg')


class PathPlotter:
    """Class for drawing run artifacts: path overlays and metric box plots"""

    def __init__(self, output_dir: str = 'plots'):
        """
        Initialize the plotter

        Args:
            output_dir (str): Directory to save generated plots
        """
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)

        self.figsize = (10, 8)
        self.dpi = 100

        self.colors = {
            'sidewalk': '#d9d9d9',
            'crosswalk': '#f0f0f0',
            'building': '#8c8c8c',
            'obstacle': '#595959',
            'p_path': '#1f77b4',
            'r_path': '#ff7f0e',
            's_path': '#2ca02c',
            'waypoint': '#d62728',
        }

    def _draw_map(self, ax, sidewalk_map: SidewalkMap):
        layers = (
            (sidewalk_map.sidewalks, 'sidewalk'),
            (sidewalk_map.crosswalks, 'crosswalk'),
            (sidewalk_map.buildings, 'building'),
            ([o.polygon() for o in sidewalk_map.obstacles], 'obstacle'),
        )
        for polygons, kind in layers:
            for polygon in polygons:
                x, y = polygon.exterior.xy
                ax.fill(x, y, color=self.colors[kind], zorder=1)
        for curb in sidewalk_map.curbs:
            x, y = curb.line.xy
            ax.plot(x, y, color='black', linewidth=1, zorder=2)

    def plot_paths(self, sidewalk_map: SidewalkMap, p_traces: Sequence[PathTrace],
                   r_traces: Sequence[PathTrace], s_trace: Optional[PathTrace] = None,
                   waypoints: Sequence = (), filename: str = 'paths.png') -> str:
        """
        Overlay pedestrian, robot and shortest paths on the map

        Returns:
            str: Path to the saved figure
        """
        fig, ax = plt.subplots(figsize=self.figsize, dpi=self.dpi)
        try:
            self._draw_map(ax, sidewalk_map)
            for label, traces in (('p_path', p_traces), ('r_path', r_traces)):
                for index, trace in enumerate(traces):
                    ax.plot(trace.xy[:, 0], trace.xy[:, 1], color=self.colors[label],
                            linewidth=1, alpha=0.6, label=label if index == 0 else None, zorder=3)
            if s_trace is not None:
                ax.plot(s_trace.xy[:, 0], s_trace.xy[:, 1], color=self.colors['s_path'],
                        linewidth=2, linestyle='--', label='s_path', zorder=4)
            for waypoint in waypoints:
                ax.scatter(waypoint[0], waypoint[1], color=self.colors['waypoint'], marker='*', s=120, zorder=5)

            ax.set_aspect('equal')
            ax.set_xlabel('x (m)')
            ax.set_ylabel('y (m)')
            ax.legend(loc='best')
            ax.grid(True, alpha=0.3)

            path = os.path.join(self.output_dir, filename)
            fig.savefig(path, bbox_inches='tight')
            return path
        finally:
            plt.close(fig)

    def plot_boxplots(self, pairwise: pd.DataFrame, filename: str = 'boxplot.png') -> str:
        """
        Box plots of P-R and P-S values per metric, whiskers at min/max

        Returns:
            str: Path to the saved figure
        """
        fig, axes = plt.subplots(1, len(METRICS), figsize=(12, 5), dpi=self.dpi)
        try:
            for ax, metric in zip(axes, METRICS):
                selected = pairwise[pairwise['metric'] == metric]
                data: List = [
                    selected[selected['comparison'] == name]['value'].to_numpy()
                    for name in ('P-R', 'P-S')
                ]
                ax.boxplot(data, whis=(0, 100))
                ax.set_xticks([1, 2], ['P-R', 'P-S'])
                ax.set_title(metric)
                ax.set_ylabel('distance (m)')
                ax.grid(True, alpha=0.3)

            path = os.path.join(self.output_dir, filename)
            fig.savefig(path, bbox_inches='tight')
            return path
        finally:
            plt.close(fig)
