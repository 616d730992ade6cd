"""Visual question answering as reading comprehension."""

__version__ = "0.1.0"
