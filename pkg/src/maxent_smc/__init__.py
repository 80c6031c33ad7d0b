"""Maximum-entropy reconstruction on binary states with SMC-driven stochastic
approximation and debiased SGLD posterior sampling."""

__version__ = "0.1.0"
