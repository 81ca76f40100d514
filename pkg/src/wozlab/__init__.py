"""wozlab: a server and harness for collecting situated, multimodal
task-oriented dialogues over a synchronized 2D scene."""

__version__ = "0.1.0"
