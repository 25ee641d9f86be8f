"""Simulation and analysis of the quantum seal message protocol.

Bob sends randomly prepared qubits, Alice measures each in a random Pauli
basis and announces either the message bit masked by her outcome or the raw
outcome.  The package simulates sessions against eavesdroppers, computes how
much an eavesdropper learns from the announcements, and lets Bob bound that
exposure from the result-announcements after the fact.
"""

__version__ = "0.1.0"
