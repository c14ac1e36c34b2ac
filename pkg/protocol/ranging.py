"""RSSI to distance equivalence used by the community rule."""
from __future__ import annotations

import math
from typing import Optional

from simulation.channel import ChannelModel

DEFAULT_CHANNEL = ChannelModel()


def rssi_to_distance(rssi: float, model: ChannelModel = DEFAULT_CHANNEL, tx_power: Optional[float] = None) -> float:
    """
    Invert the mean log-distance path loss (shadowing term set to zero).

    Readings at or above tx_power - PL(d0) clamp to the reference distance.
    """
    tx = model.tx_power if tx_power is None else tx_power
    path_loss = tx - rssi
    if path_loss <= model.pl_d0:
        return model.d0
    return model.d0 * 10.0 ** ((path_loss - model.pl_d0) / (10.0 * model.path_loss_exponent))


def distance_to_rssi(distance: float, model: ChannelModel = DEFAULT_CHANNEL, tx_power: Optional[float] = None) -> float:
    tx = model.tx_power if tx_power is None else tx_power
    return tx - model.pl_d0 - 10.0 * model.path_loss_exponent * math.log10(max(distance, model.d0) / model.d0)
