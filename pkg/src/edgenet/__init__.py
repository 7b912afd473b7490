"""Training-and-compression toolkit: three-phase LSTM training with
magnitude pruning, selective weight decay, int8 dynamic-range quantization,
a bit-exact model container, and an intrusion-detection evaluation harness.
"""

__version__ = "0.1.0"
