"""Piano-roll genre transfer with cycle-consistent GANs, plus the genre classifiers that judge it."""

__version__ = "0.1.0"
