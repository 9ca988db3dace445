"""Weekly time periods and their embeddings.

A week is cut into 7 days x 5 daily sessions, giving 35 periods indexed
``day * 5 + session`` with Monday as day 0.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

N_DAYS = 7
N_SESSIONS = 5
N_PERIODS = N_DAYS * N_SESSIONS
EMBEDDING_DIM = 30

# Session start minutes: morning 8:00, noon 11:30, afternoon 14:00, night 17:30.
# Session 4 covers [22:00, 24:00) and [0:00, 8:00).
_SESSION_EDGES = (8 * 60, 11 * 60 + 30, 14 * 60, 17 * 60 + 30, 22 * 60)


def session_of(minutes_of_day: int) -> int:
    if not 0 <= minutes_of_day < 24 * 60:
        raise ValueError(f"minutes_of_day must be in [0, 1439], got {minutes_of_day}")
    for session in range(4):
        if _SESSION_EDGES[session] <= minutes_of_day < _SESSION_EDGES[session + 1]:
            return session
    return 4


def period_of(day_index: int, minutes_of_day: int) -> int:
    """Map (day of week, minute of day) to a period index in [0, 34].

    >>> period_of(2, 12 * 60)
    11
    """
    if not 0 <= day_index < N_DAYS:
        raise ValueError(f"day_index must be in [0, 6], got {day_index}")
    return day_index * N_SESSIONS + session_of(minutes_of_day)


def split_period(period: int) -> tuple[int, int]:
    """Inverse of :func:`period_of`: return ``(day_index, session_index)``."""
    check_period(period)
    return divmod(period, N_SESSIONS)


def check_period(period: int) -> int:
    if not 0 <= period < N_PERIODS:
        raise ValueError(f"period must be in [0, {N_PERIODS - 1}], got {period}")
    return period


def embed_period(period: int, seed: int, dim: int = EMBEDDING_DIM) -> NDArray[np.float64]:
    """Unit-norm Gaussian embedding of a period.

    The vector depends only on ``(seed, period)``, so it is stable across runs
    and across processes.
    """
    check_period(period)
    rng = np.random.default_rng([seed, period])
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def period_embeddings(seed: int, dim: int = EMBEDDING_DIM) -> NDArray[np.float64]:
    """All 35 embeddings stacked row-wise, shape ``(35, dim)``."""
    return np.stack([embed_period(p, seed, dim) for p in range(N_PERIODS)])
