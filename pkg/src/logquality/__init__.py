"""Automatic quality assessment of log instructions.

Extracts log instructions from source code, predicts their log level and
whether their static text has sufficient linguistic structure with small
transformer-encoder models, and explains predictions per token with Shapley
values.
"""

__version__ = "0.1.0"
