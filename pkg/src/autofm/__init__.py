"""Automatic FM synthesizer design from monophonic recordings.

The package splits into five parts: ``fm`` (patch topologies and the
renderer), ``features`` (pitch, loudness, spectral losses, embeddings),
``model`` (the trainable envelope supernet), ``search`` (the evolutionary
loop over FM algorithms and ratios), and ``pipeline``/``cli``/``service``
(the end-to-end driver, command line, and HTTP front door).
"""

__version__ = "0.1.0"
