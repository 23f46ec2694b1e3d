"""Monte-Carlo simulator for federated device-activity detection in
cell-free massive MIMO uplinks.

Kept deliberately light so that `fedad.cli` can pin BLAS thread counts
before numpy is first imported.
"""

__version__ = "0.1.0"
