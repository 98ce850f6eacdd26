"""Module for the linear noise schedule of the diffusion model."""
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from src.model.core.autodiff import Array
from src.model.core.errors import ConfigError, StepError
from src.model.core.settings import ScheduleConfig

# Signal left at the last step of the default schedule must fall below this
MAX_FINAL_ALPHA_BAR: float = 0.05


class NoiseSchedule:
    """
    Betas, alphas and cumulative alpha products of a diffusion chain.

    Steps are 1-based; alpha_bar(0) is 1 by convention.
    """

    def __init__(self, betas: npt.ArrayLike) -> None:
        """
        Derive alphas from betas.

        :param betas: beta_1 .. beta_T, strictly increasing inside (0, 1)
        :raises ConfigError: Betas empty, outside (0, 1) or not increasing
        """
        betas_array = np.asarray(betas, dtype=np.float64).reshape(-1)
        if betas_array.size == 0:
            raise ConfigError("schedule.steps", "need at least one step")
        if not ((betas_array > 0.0) & (betas_array < 1.0)).all():
            raise ConfigError("schedule.beta_end", "betas must lie in (0, 1)")
        if (np.diff(betas_array) <= 0.0).any():
            raise ConfigError("schedule.beta_start", "betas must be strictly increasing")
        self._betas: Array = betas_array
        self._alphas: Array = 1.0 - betas_array
        # Index 0 holds the t = 0 convention
        self._alpha_bars: Array = np.concatenate([[1.0], np.cumprod(self._alphas)])

    @classmethod
    def from_config(cls, config: ScheduleConfig) -> "NoiseSchedule":
        """
        Build the linear schedule, rescaling the reference beta range to the configured step count.

        :param config: Step count and beta range
        :raises ConfigError: Betas reach 1, or alpha_bar_T isn't below 0.05
        :return: Noise schedule
        """
        factor = config.reference_steps / config.steps
        schedule = cls(np.linspace(config.beta_start, config.beta_end, config.steps) * factor)
        if schedule.alpha_bar(schedule.steps) >= MAX_FINAL_ALPHA_BAR:
            raise ConfigError(
                "schedule.steps",
                f"alpha_bar_T = {schedule.alpha_bar(schedule.steps):.4f} leaves too much signal",
            )
        return schedule

    @property
    def steps(self) -> int:
        """
        Get the number of steps T.

        :return: T
        """
        return int(self._betas.size)

    @property
    def betas(self) -> Array:
        """
        Get beta_1 .. beta_T.

        :return: Copy of the betas
        """
        return self._betas.copy()

    def check_step(self, t: int, allow_zero: bool = False) -> None:
        """
        Validate a step index.

        :param t: Step
        :param allow_zero: Accept the t = 0 convention
        :raises StepError: Step outside [1, T] (or [0, T])
        """
        low = 0 if allow_zero else 1
        if not low <= t <= self.steps:
            raise StepError(f"step {t} outside [{low}, {self.steps}]")

    def beta(self, t: int) -> float:
        """
        Get beta_t.

        :param t: Step in [1, T]
        :return: beta_t
        """
        self.check_step(t)
        return float(self._betas[t - 1])

    def alpha(self, t: int) -> float:
        """
        Get alpha_t = 1 - beta_t.

        :param t: Step in [1, T]
        :return: alpha_t
        """
        self.check_step(t)
        return float(self._alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """
        Get the product of alpha_1 .. alpha_t.

        :param t: Step in [0, T]
        :return: alpha_bar_t (1 at t = 0)
        """
        self.check_step(t, allow_zero=True)
        return float(self._alpha_bars[t])

    def alpha_bars(self, steps: Sequence[int], allow_zero: bool = False) -> Array:
        """
        Get alpha_bar for each of several steps.

        :param steps: Steps
        :param allow_zero: Accept the t = 0 convention
        :return: Array of alpha_bar values
        """
        for t in steps:
            self.check_step(int(t), allow_zero)
        return self._alpha_bars[np.asarray(steps, dtype=np.int64)]

    def posterior_variance(self, t: int) -> float:
        """
        Variance of q(z_{t-1} | z_t, x0): (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.

        :param t: Step in [1, T]
        :return: Posterior variance (0 at t = 1)
        """
        return (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
