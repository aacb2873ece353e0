"""Verifiable gradient-trading market at desk scale.

A deterministic library, simulator, and CLI for a gradient data market:
data owners share encrypted model gradients with off-chain servers under
verifiable Shamir secret sharing, the servers jointly validate each
gradient with a secret-shared proof of a norm-threshold circuit, and a
metered contract state machine arbitrates payment and aggregation.
"""

__version__ = "0.1.0"
