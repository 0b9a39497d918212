"""Target speaker extraction with WaveUNet, an anchor-conditioned GCRN and deep filtering."""
__version__ = "0.1.0"
