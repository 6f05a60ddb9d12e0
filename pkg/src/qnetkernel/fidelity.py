"""Werner-pair fidelity algebra.

All entanglement in the simulator is tracked as a scalar fidelity of a
Werner pair, so purification, swapping and decoherence reduce to closed
forms in that one number. The fully mixed state sits at F = 0.25; nothing
meaningful lives below it, hence the domain floor.
"""

import math

from .errors import DomainError

F_FLOOR = 0.25


def _check_domain(*values: float) -> None:
    for f in values:
        if not (F_FLOOR <= f <= 1.0):
            raise DomainError(f"fidelity {f!r} outside [{F_FLOOR}, 1.0]")


def purify_fidelity(f1: float, f2: float) -> tuple[float, float]:
    """Recurrence purification of two Werner pairs (bilateral CNOT + parity check).

    Returns (f_out, p_succ): the survivor fidelity conditioned on success and
    the success probability. (0.25, 0.25) is a fixed point; pairs above 0.5
    with equal fidelity strictly improve.
    """
    _check_domain(f1, f2)
    p_succ = (
        f1 * f2
        + f1 * (1.0 - f2) / 3.0
        + (1.0 - f1) * f2 / 3.0
        + 5.0 * (1.0 - f1) * (1.0 - f2) / 9.0
    )
    f_out = (f1 * f2 + (1.0 - f1) * (1.0 - f2) / 9.0) / p_succ
    return f_out, p_succ


def swap_fidelity(f1: float, f2: float) -> float:
    """Fidelity of the stitched pair after an ideal Bell-state measurement."""
    _check_domain(f1, f2)
    return f1 * f2 + (1.0 - f1) * (1.0 - f2) / 3.0


def decayed_fidelity(f0: float, dt: float, t_coh: float) -> float:
    """Exponential depolarization toward the mixed state over dt seconds."""
    _check_domain(f0)
    if dt <= 0.0 or math.isinf(t_coh):
        return f0
    return F_FLOOR + (f0 - F_FLOOR) * math.exp(-dt / t_coh)
