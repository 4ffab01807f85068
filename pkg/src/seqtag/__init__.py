"""Character/word GRU sequence tagger with a cost-augmented CRF output layer
and parameter-sharing transfer between a source and a target task."""

__version__ = "0.1.0"
