"""V-BLAST MIMO over Gamma-Gamma turbulence: asymptotic BER analysis and Monte-Carlo validation."""

__version__ = "0.1.0"
