"""Privacy-preserving coordination protocols for multi-agent systems.

Static and dynamic average consensus, differentially-private distributed
optimization, additively homomorphic encryption, inference attacks on
message traces and a simple differential-privacy accountant.
"""

__version__ = "0.1.0"
