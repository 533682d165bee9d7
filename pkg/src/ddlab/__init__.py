"""Delay-Doppler channel laboratory: VOFDM/OFDM modems, space-time and
time-frequency codes, and reproducible Monte-Carlo experiments."""

__version__ = "0.1.0"
