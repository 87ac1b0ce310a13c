"""Critical-contrast periodic homogenisation on 2D cells."""

__version__ = "0.1.0"
