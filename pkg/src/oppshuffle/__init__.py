"""oppshuffle: opportunistic peer-to-peer data shuffling, simulated.

A protocol library and Monte-Carlo simulator for gossip-style data mixing:
nodes meet (by Markov mobility or real contact traces), swap random halves
of their labeled data, and the simulator measures how quickly item
locations converge to a uniform distribution (Kolmogorov-Smirnov distance
against 1/N), plus the node-local graph knowledge needed to decide when to
stop shuffling.
"""

__version__ = "0.1.0"

RESULTS_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
