"""Edge intrusion detection for polling-style industrial networks.

The package is organised around a per-node detection engine that learns
which connections exist and how fast they tick, an authenticated UDP
status protocol that edge nodes use to report their state, a central
logger that tracks node liveness, and a deterministic traffic simulator
used to exercise all of it.
"""

__version__ = "0.1.0"
