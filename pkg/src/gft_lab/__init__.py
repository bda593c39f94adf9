"""Two-sided market gains-from-trade laboratory.

Simulates and audits fixed-price, constrained fixed-price, seller-adjusted
posted-price, and offering mechanisms for a constrained-additive buyer facing
unit-supply sellers, together with the benchmark decompositions, contention
resolution schemes, and LP oracles used to verify their guarantees.
"""

from __future__ import annotations

__version__ = "0.1.0"
