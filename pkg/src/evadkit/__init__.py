"""Event-stream video anomaly detection toolkit.

Simulation of event cameras, adaptive event framing, density-aware frame
sampling, density-aware temporal attention, cross-modal distillation, a small
weakly supervised trainer, frame-level evaluation and box localization.
"""

__version__ = "0.1.0"
