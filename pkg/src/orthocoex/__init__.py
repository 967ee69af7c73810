"""orthocoex: WiFi coexistence with orthogonal listen-before-talk nodes."""

__version__ = "0.1.0"
