"""Toolkit for building sign-language translation corpora from captioned
video metadata, mining weakly-supervised sign labels from recognizer
outputs, and training/evaluating a multi-stream fusion translation model.
"""

__version__ = "0.1.0"
