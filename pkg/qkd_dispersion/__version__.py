__title__ = "qkd-dispersion"
__description__ = "Entangled-photon QKD over dispersive fiber: Monte Carlo time tags, coincidence analysis and key-rate models"
__version__ = "0.1.0"
