"""Deterministic human-robot teaming simulator.

Gesture commands flow from a (simulated or emulated) glove through an
activation FSM into a robot executive that plans, navigates, and explores
under keep-in constraints; map and state telemetry flow back over a
newline-delimited envelope protocol to operator consoles.
"""

__version__ = "0.1.0"
