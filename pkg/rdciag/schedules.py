import typing as t
from dataclasses import dataclass

import numpy as np

type Array = np.ndarray


@dataclass(frozen=True, slots=True)
class DelaySchedule:
    """
    Decides which gradient snapshots are refreshed at iteration k.

    `due` receives the iteration each component was last refreshed at and
    returns a boolean mask over components. The schedule itself is immutable;
    randomized schedules draw from a generator owned by the solver state.
    """

    @property
    def kind(self) -> str:
        raise NotImplementedError

    @property
    def tau(self) -> int:
        raise NotImplementedError

    def make_rng(self) -> np.random.Generator | None:
        return None

    def due(
        self, k: int, refreshed_at: Array, rng: np.random.Generator | None
    ) -> Array:
        raise NotImplementedError


@dataclass(frozen=True, slots=True)
class ZeroDelay(DelaySchedule):
    @property
    def kind(self) -> str:
        return "zero"

    @property
    def tau(self) -> int:
        return 0

    def due(self, k, refreshed_at, rng):
        return np.ones(refreshed_at.shape, dtype=bool)


@dataclass(frozen=True, slots=True)
class CyclicDelay(DelaySchedule):
    """Component i is refreshed when k ≡ i (mod period)."""

    period: int

    def __post_init__(self):
        if self.period < 1:
            raise ValueError(f"Cyclic period must be at least 1, got {self.period}.")

    @property
    def kind(self) -> str:
        return "cyclic"

    @property
    def tau(self) -> int:
        return self.period - 1

    def due(self, k, refreshed_at, rng):
        return np.arange(refreshed_at.shape[0]) % self.period == k % self.period


@dataclass(frozen=True, slots=True)
class RandomBoundedDelay(DelaySchedule):
    """
    Each component is refreshed with probability 1/(tau+1), and always when
    keeping its snapshot would push its age past tau.
    """

    bound: int
    seed: int = 0

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError(f"Delay bound must be nonnegative, got {self.bound}.")

    @property
    def kind(self) -> str:
        return "random_bounded"

    @property
    def tau(self) -> int:
        return self.bound

    def make_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def due(self, k, refreshed_at, rng):
        if rng is None:
            raise ValueError("random_bounded schedule needs its generator.")
        draws = rng.random(refreshed_at.shape[0])
        forced = k - refreshed_at > self.bound
        return forced | (draws < 1.0 / (self.bound + 1))


def make_schedule(kind: str, *, period: int = 1, tau: int = 0, seed: int = 0) -> DelaySchedule:
    match kind:
        case "zero":
            return ZeroDelay()
        case "cyclic":
            return CyclicDelay(period)
        case "random_bounded":
            return RandomBoundedDelay(tau, seed)
        case _:
            raise ValueError(f"Unknown delay schedule {kind!r}.")


def describe(schedule: DelaySchedule) -> dict[str, t.Any]:
    """Flat key/value summary used in trace metadata and reports."""
    match schedule:
        case CyclicDelay(period=period):
            return {"delay": "cyclic", "period": period, "tau": schedule.tau}
        case RandomBoundedDelay(bound=bound, seed=seed):
            return {"delay": "random_bounded", "tau": bound, "delay_seed": seed}
        case _:
            return {"delay": schedule.kind, "tau": schedule.tau}
