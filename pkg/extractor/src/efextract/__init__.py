"""Feature-extraction adapter.

Runs a spatiotemporal backbone over windowed video frames and emits
`.efseq` feature files, the binary contract consumed by the classifier
toolkit.  Backbones are pluggable: exported TorchScript modules for the
pretrained models, plus a deterministic projection backbone for smoke
tests and CI.
"""

__version__ = "0.1.0"
