"""crosspatch-bridge: a thin adapter that serves an object detector behind
the crosspatch oracle wire protocol (stdio lines or HTTP), reporting only
person detections with scores in [0, 1]."""

__version__ = "0.1.0"
