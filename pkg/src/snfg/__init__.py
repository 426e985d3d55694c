"""Semi network-form games with level-K bounded-rational players, and a
two-aircraft mid-air encounter simulator built on them."""

__version__ = "0.1.0"
