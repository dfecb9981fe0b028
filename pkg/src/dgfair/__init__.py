"""Fairness and accuracy transfer under domain shift, on synthetic Gaussian domains.

Subpackages by concern:

- :mod:`dgfair.domains` -- synthetic domain families with known densities
- :mod:`dgfair.divergence` -- JS / KL / EMD / Hellinger estimators and closed forms
- :mod:`dgfair.models` -- stochastic encoder, bounded classifier, losses
- :mod:`dgfair.density_match` -- closed-form Gaussian transport maps between domains
- :mod:`dgfair.fatdm` -- two-stage invariant training and evaluation metrics
- :mod:`dgfair.bounds` -- numerical checks of the transfer bounds
"""

__version__ = "0.1.0"
