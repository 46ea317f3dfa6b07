"""Configuration presets."""
CONFIG_PATH = __path__[0]
