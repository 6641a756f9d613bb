"""Neighborhood energy market on a BFT-replicated ledger.

A 15-minute discriminative-price double auction among prosumer and consumer
households, with utility fallback at fixed tariffs, bottom-up grid-fee
settlement, per-household bidding agents fed by (simulated) smart meters,
a block explorer API, and a deterministic end-to-end scenario simulator.
"""

__version__ = "0.1.0"
