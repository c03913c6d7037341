"""Loop vertex expansion toolkit for the Wick-ordered quartic model in two dimensions."""

__version__ = "0.1.0"
