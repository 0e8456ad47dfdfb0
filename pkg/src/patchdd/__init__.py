"""Global-local solver for semi-linear elliptic problems with localized uncertainties."""

__version__ = "0.1.0"
