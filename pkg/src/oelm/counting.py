"""Global call tallies for model evaluations.

Every evaluation of the nonlinear model counts toward ``NONLINEAR_CALLS``,
including ones hidden inside samplers (chain proposals, ray projections).
Estimators report the tally delta over their lifetime, so reported costs are
auditable: the delta must equal the advertised sample count plus any
documented chain-construction overhead.
"""

from __future__ import annotations


class CallCounter:
    """Monotone evaluation tally."""

    __slots__ = ("_count",)

    def __init__(self) -> None:
        self._count = 0

    def add(self, k: int) -> None:
        if k < 0:
            raise ValueError("counter increment must be nonnegative")
        self._count += int(k)

    @property
    def value(self) -> int:
        return self._count

    def snapshot(self) -> int:
        return self._count

    def delta(self, snap: int) -> int:
        return self._count - snap

    def reset(self) -> None:
        # test/CLI hook; estimators only use deltas and never reset
        self._count = 0


NONLINEAR_CALLS = CallCounter()
LINEAR_CALLS = CallCounter()
