from .config import Config, EpisodeConfig
from .episode import LapMetrics, run_episode

__all__ = ["Config", "EpisodeConfig", "LapMetrics", "run_episode"]
