"""Multinomial-logit choice kernel over finite alternative sets.

Numerically stable logsums (max-shift form), choice probabilities,
inverse-CDF sampling and expectations.  Alternative ordering is fixed and
preserved everywhere, which makes sampling reproducible and resolves ties
deterministically by position.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InvalidInputError


def _as_utilities(values) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError("utility vector must be non-empty and 1-D")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("utility vector contains non-finite entries")
    return v


def logsum(values) -> float:
    """ln sum(exp(v_i)), computed as m + ln sum(exp(v_i - m)) with m = max."""
    return kernels.logsumexp(_as_utilities(values))


def probabilities(values) -> np.ndarray:
    """Choice probabilities exp(v_i - logsum); non-negative, sum to one."""
    v = _as_utilities(values)
    out = np.empty_like(v)
    kernels.softmax(v, out)
    return out


def sample_index(values, rng: np.random.Generator) -> int:
    """Draw one alternative index by inverse CDF in the fixed ordering."""
    p = probabilities(values)
    cum = np.cumsum(p)
    return int(kernels.choose(cum, rng.random()))


def expectation(values, payoffs) -> float:
    """sum_i p_i * f_i with p = probabilities(values)."""
    v = _as_utilities(values)
    f = np.ascontiguousarray(payoffs, dtype=np.float64)
    if f.shape != v.shape:
        raise InvalidInputError(
            f"payoff vector length {f.size} does not match {v.size} alternatives"
        )
    return kernels.dot(probabilities(v), f)


@dataclass
class UtilityVector:
    """Systematic utilities for an ordered, labelled set of alternatives."""

    values: np.ndarray
    labels: Sequence[str] = field(default=None)

    def __post_init__(self):
        self.values = _as_utilities(self.values)
        if self.labels is None:
            self.labels = [str(i) for i in range(self.values.size)]
        elif len(self.labels) != self.values.size:
            raise InvalidInputError(
                f"{len(self.labels)} labels for {self.values.size} utilities"
            )

    def logsum(self) -> float:
        return logsum(self.values)

    def probabilities(self) -> np.ndarray:
        return probabilities(self.values)

    def sample(self, rng: np.random.Generator) -> str:
        return self.labels[sample_index(self.values, rng)]

    def expectation(self, payoffs) -> float:
        return expectation(self.values, payoffs)
