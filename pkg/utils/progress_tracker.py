import logging
import time
from typing import Optional, Sequence

logger = logging.getLogger(__name__)


class ProgressTracker:
    """Tracks completed replicates of a long run and logs milestone crossings."""

    def __init__(self, total: int, label: str = "replicates", milestones: Sequence[float] = (0.25, 0.5, 0.75, 1.0)):
        if total < 0:
            raise ValueError("total must be non-negative")
        self.total = total
        self.label = label
        self.milestones = {m: False for m in sorted(milestones)}
        self.completed = 0
        self.failed = 0
        self.started_at = time.monotonic()

    @property
    def fraction(self) -> float:
        return 1.0 if self.total == 0 else self.completed / self.total

    def update(self, done: int, failed: int = 0) -> Optional[float]:
        """
        Record finished work.

        Args:
            done: Replicates finished since the last update, failed ones included.
            failed: How many of those failed.

        Returns:
            The highest milestone crossed by this update, if any.
        """
        self.completed += done
        self.failed += failed
        crossed = None
        for milestone, reached in self.milestones.items():
            if not reached and self.fraction >= milestone:
                self.milestones[milestone] = True
                crossed = milestone
        if crossed is not None:
            elapsed = time.monotonic() - self.started_at
            logger.info(
                f"{self.label}: {crossed:.0%} ({self.completed}/{self.total}, "
                f"{self.failed} failed, {elapsed:.1f}s)"
            )
        return crossed
