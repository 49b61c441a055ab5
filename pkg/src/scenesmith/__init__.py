"""Indoor-scan detections to graphics-ready scene descriptions."""

__version__ = "0.1.0"
