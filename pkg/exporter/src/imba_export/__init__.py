"""imba-export: dump torch model internals into the imba-lens interchange
format, and train toy imbalanced classifiers with the four cost-sensitive
losses end to end."""

__version__ = "0.1.0"
