"""Joint subcarrier assignment and power allocation for downlink MC-NOMA
with imperfect SIC, solved by two cooperating DDPG modules."""

__version__ = "0.1.0"
