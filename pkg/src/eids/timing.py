"""Per-flow interarrival-time envelopes and their runtime checks.

During learning a flow accumulates the minimum, maximum and cumulative
mean of its interarrival times. In active mode each new interarrival is
first held against the widened min/max band; values inside it enter a
sliding window whose mean is held against the widened learned mean.
Band boundaries are exclusive: a value equal to a bound is flagged.
All durations are integer microseconds, which keeps window sums exact.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum


class TimingVerdict(Enum):
    OK = "ok"
    TOO_FAST = "too-fast"
    TOO_SLOW = "too-slow"
    MEAN_DRIFT = "mean-drift"


class NonPositiveInterarrival(ValueError):
    """Interarrival samples must be positive durations."""


class BaselineNotReady(RuntimeError):
    """A baseline needs at least two learning packets (one interval)."""


@dataclass
class ActiveWindow:
    """Bounded FIFO of recent interarrivals with an exact running sum."""

    capacity: int
    samples: deque = field(default_factory=deque)
    running_sum: int = 0

    def push(self, t_us: int) -> None:
        if len(self.samples) == self.capacity:
            self.running_sum -= self.samples.popleft()
        self.samples.append(t_us)
        self.running_sum += t_us

    @property
    def full(self) -> bool:
        return len(self.samples) == self.capacity

    @property
    def mean(self) -> float:
        return self.running_sum / len(self.samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class FlowBaseline:
    """Learned timing envelope of one flow.

    delta is the multiplicative tolerance widening both bands; it may
    exceed 1, in which case the lower bounds clamp at zero and only the
    upper bounds keep widening.
    """

    delta: float
    n_l: int = 0
    learned_min_us: int = 0
    learned_max_us: int = 0
    mean_us: float = 0.0
    last_arrival_us: int | None = None
    _sum_us: int = 0
    _ready: bool = False

    @property
    def ready(self) -> bool:
        return self._ready

    @property
    def learning_mean(self) -> float:
        return self._sum_us / self.n_l if self.n_l else 0.0

    def record_learning_sample(self, t_us: int) -> None:
        if t_us <= 0:
            raise NonPositiveInterarrival("interarrival of %d us" % t_us)
        if self.n_l == 0:
            self.learned_min_us = t_us
            self.learned_max_us = t_us
        else:
            if t_us < self.learned_min_us:
                self.learned_min_us = t_us
            if t_us > self.learned_max_us:
                self.learned_max_us = t_us
        self.n_l += 1
        self._sum_us += t_us

    def activate(self) -> bool:
        """Freeze the learned mean; returns whether the baseline is usable."""
        self._ready = self.n_l >= 2
        if self._ready:
            self.mean_us = self._sum_us / self.n_l
        return self._ready

    def low_bound(self) -> float:
        return max(0.0, self.learned_min_us * (1.0 - self.delta))

    def high_bound(self) -> float:
        return self.learned_max_us * (1.0 + self.delta)

    def check(self, t_us: int, window: ActiveWindow | None) -> TimingVerdict:
        """Classify one active-mode interarrival.

        The min/max band is tested first; only values inside it enter
        the window. The mean band is evaluated once the window holds a
        full complement of samples, since the mean of a handful of
        samples right after activation says nothing about drift.
        Passing window=None skips the mean check entirely.
        """
        if not self._ready:
            raise BaselineNotReady("flow has %d learning samples" % self.n_l)
        if t_us <= self.low_bound():
            return TimingVerdict.TOO_FAST
        if t_us >= self.high_bound():
            return TimingVerdict.TOO_SLOW
        if window is not None:
            window.push(t_us)
            if window.full:
                mean = window.mean
                if mean <= max(0.0, self.mean_us * (1.0 - self.delta)):
                    return TimingVerdict.MEAN_DRIFT
                if mean >= self.mean_us * (1.0 + self.delta):
                    return TimingVerdict.MEAN_DRIFT
        return TimingVerdict.OK

    def adjust(self, t_us: int, alpha: float) -> None:
        """Runtime baseline adaptation from a sample judged OK.

        Only the mean moves, exponentially weighted; the learned
        extrema are never widened by runtime traffic.
        """
        self.mean_us = (1.0 - alpha) * self.mean_us + alpha * t_us

    def absence(self, now_us: int) -> TimingVerdict | None:
        """TOO_SLOW once the flow has been silent past the upper band."""
        if not self._ready or self.last_arrival_us is None:
            return None
        if now_us - self.last_arrival_us >= self.high_bound():
            return TimingVerdict.TOO_SLOW
        return None

    @classmethod
    def from_persisted(
        cls, mean_us: int, min_us: int, max_us: int, n_l: int, delta: float
    ) -> "FlowBaseline":
        baseline = cls(
            delta=delta,
            n_l=n_l,
            learned_min_us=min_us,
            learned_max_us=max_us,
            mean_us=float(mean_us),
            _sum_us=mean_us * n_l,
        )
        baseline._ready = n_l >= 2
        return baseline
