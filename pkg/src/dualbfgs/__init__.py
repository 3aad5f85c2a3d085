"""Decentralized consensus optimization in the dual domain.

Library and CLI simulator for dual decomposition with a decentralized
quasi-Newton (BFGS-style) curvature correction, with synchronous and
asynchronous engines and a reproducible quadratic benchmark harness.
"""

__version__ = "0.1.0"
