"""Part-based instance segmentation toolkit for low-solidity objects.

Masks are decomposed into near-convex parts by concavity-driven cuts,
synthetic cluttered scenes provide part ground truth, and part predictions
are reassembled into instances by bidirectional offset matching.
"""

__version__ = "0.1.0"
