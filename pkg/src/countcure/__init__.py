"""countcure: compare, detect, and repair multi-source cumulative count panels."""

from .model import (
    CumulativeSeries,
    IncrementSeries,
    Level,
    Metric,
    Panel,
    SeriesKey,
    SourceId,
    to_cumulative,
    to_increments,
)

__version__ = "0.1.0"

__all__ = [
    "CumulativeSeries", "IncrementSeries", "Level", "Metric", "Panel",
    "SeriesKey", "SourceId", "to_cumulative", "to_increments", "__version__",
]
