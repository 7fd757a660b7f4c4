"""Leave-one-out contrastive learning on a synthetic factor-image benchmark."""

__version__ = "0.1.0"
