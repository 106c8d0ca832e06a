"""Scaling of raw scenario quantities into network-friendly features.

Channel gains span many orders of magnitude and QoS targets are in bit/s,
so both are mapped to O(1) values before entering any network.
"""

from __future__ import annotations

import numpy as np

from .scenario import Scenario


def gain_features(scenario: Scenario) -> np.ndarray:
    """Per (subcarrier, user) full-power SNR in units of 100 dB."""
    snr = scenario.total_power * scenario.gains / scenario.noise_var
    return 0.1 * np.log10(1.0 + snr)


def qos_features(scenario: Scenario) -> np.ndarray:
    """Minimum rates as spectral efficiency over the whole band, bit/s/Hz."""
    return scenario.qos_min / scenario.bandwidth
