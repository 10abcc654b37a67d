"""Pure-numpy settlement kernel, the fallback for the compiled extension."""

from __future__ import annotations

import numpy as np


def settle_trials(
    u_event: np.ndarray,
    capability: np.ndarray,
    contracts: np.ndarray,
    pi_r: float,
    pi_p: float,
    pi_e: float,
    p: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Settle a block of trials against per-window contracts.

    u_event: (trials, windows) event uniforms; a window is an event iff u < p.
    capability: (trials, windows) realized curtailment capability, kWh.
    contracts: (windows,) contracted sizes, kWh.

    Returns (profit per trial, event count per trial, shortfall count per trial).
    """
    u_event = np.asarray(u_event, dtype=float)
    capability = np.asarray(capability, dtype=float)
    contracts = np.asarray(contracts, dtype=float)
    if u_event.ndim != 2 or capability.shape != u_event.shape:
        raise ValueError("u_event and capability must share a (trials, windows) shape")
    if contracts.shape != (u_event.shape[1],):
        raise ValueError("contracts must have one entry per window")

    events = u_event < p
    delivered = np.minimum(capability, contracts)
    event_term = pi_e * delivered - pi_p * (contracts - delivered)
    base = float(np.sum(pi_r * contracts))
    profit = base + np.where(events, event_term, 0.0).sum(axis=1)
    event_count = events.sum(axis=1).astype(np.int64)
    shortfall_count = (events & (capability < contracts)).sum(axis=1).astype(np.int64)
    return profit, event_count, shortfall_count
