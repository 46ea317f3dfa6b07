"""Package-wide default parameters for integration and reporting."""

import functools
import inspect
import warnings
from os import path

import yaml

from .config import CONFIG_PATH

PRESETS = {
    "full": path.join(CONFIG_PATH, "full.yaml"),
    "fast": path.join(CONFIG_PATH, "fast.yaml"),
}


class _Singleton(type):
    _instances = {}

    def __call__(cls, *args, **kwargs):
        if cls not in cls._instances:
            cls._instances[cls] = super(_Singleton, cls).__call__(*args, **kwargs)
        return cls._instances[cls]


class Defaults(metaclass=_Singleton):
    """Switchable keyword defaults for the reachability entry points.

    A single instance lives at :data:`defaults`. Functions decorated with
    :data:`_defaults` pick up values from the active configuration for every
    keyword argument the caller did not pass explicitly.

    Examples
    --------
    Use the coarse smoke-run settings::

        reachcore.defaults.set("fast")

    Use a custom YAML file, then go back to the function signatures::

        reachcore.defaults.set("/path/to/settings.yaml")
        reachcore.defaults.deactivate()

    Inspect one value, or all of them::

        reachcore.defaults("max_branches")
        reachcore.defaults()
    """

    def __init__(self, config=None):
        """Load a configuration.

        Parameters
        ----------
        config : str or dict, optional
            A preset name (``"full"``, ``"fast"``), a path to a YAML file or
            a dictionary. Nested sections are flattened into a single
            ``{parameter: value}`` mapping; when a parameter appears in more
            than one section the last value wins and a warning is issued.
        """
        self._raw_config = {}
        self._config = {}
        self._config_name = None
        self._override_defaults = False
        if config:
            self._set_config(config)

    def __call__(self, component=None):
        """Return the defaults dictionary, or a single value."""
        if component is not None:
            try:
                return self._config[component]
            except KeyError:
                raise KeyError(f"{component} not found in configuration.")
        return self._config

    @property
    def name(self):
        return self._config_name

    @property
    def active(self) -> bool:
        return self._override_defaults

    def set(self, new_config, refresh=False):
        """Load ``new_config`` and activate it.

        Parameters
        ----------
        new_config : str or dict
            Preset name, path to a YAML file or dictionary.
        refresh : bool, optional
            Discard previously loaded values instead of updating them.
        """
        if refresh:
            self._config = {}
        self._set_config(new_config)
        self.activate()

    def activate(self):
        """Use the loaded configuration."""
        self._override_defaults = True

    def deactivate(self):
        """Revert to the function signature defaults."""
        self._override_defaults = False

    def _set_config(self, config):
        if config is None:
            self._config_name = None
            self._raw_config = {}
            self._config = {}
            return
        if isinstance(config, str):
            self._config_name = config
            config_file = PRESETS.get(config, config)
            with open(config_file, "r") as conf:
                self._raw_config = yaml.load(conf.read(), Loader=yaml.FullLoader) or {}
        elif isinstance(config, dict):
            self._raw_config = config
            self._config_name = "custom"
        else:
            raise ValueError(
                "The configuration must be a dictionary, a path to a "
                "configuration YAML, or a preset name."
            )
        self._config = self._unpack_dict(self._raw_config, self._config)
        self._check_config()

    @staticmethod
    def _unpack_dict(nested_dict, new_dict=None):
        """Flatten a nested dictionary into ``{key: value}`` leaves.

        Examples
        --------
        >>> Defaults._unpack_dict({"a": {"dt": 0.1}, "repeat": 3})
        {'dt': 0.1, 'repeat': 3}
        """
        if new_dict is None:
            new_dict = {}
        for key, value in nested_dict.items():
            if isinstance(value, dict):
                Defaults._unpack_dict(value, new_dict)
            else:
                new_dict[key] = value
        return new_dict

    def _recursive_enumerate(self, counts, dictionary):
        for key, value in dictionary.items():
            if isinstance(value, dict):
                self._recursive_enumerate(counts, value)
            else:
                counts[key] = counts.get(key, 0) + 1

    def _check_config(self):
        """Warn if any parameter is defined more than once."""
        counts = {}
        self._recursive_enumerate(counts, self._raw_config)
        repeated = [key for key, count in counts.items() if count > 1]
        if repeated:
            warnings.warn(
                "The following parameters have multiple values defined in the "
                "configuration:\n"
                + "\n".join(repeated)
                + "\nPlease check your configuration, as only the last value "
                "specified for each parameter will be used."
            )

    def _handler(self, func):
        """Decorator applying the active defaults to keyword arguments."""
        signature = inspect.signature(func)

        @functools.wraps(func)
        def new_func(*args, **kwargs):
            if self._override_defaults:
                bound = signature.bind_partial(*args, **kwargs)
                for param in signature.parameters:
                    if param not in bound.arguments and param in self._config:
                        kwargs[param] = self._config[param]
            return func(*args, **kwargs)

        return new_func

    def apply(self, func_kwargs, **kwargs):
        """Merge active defaults for the keys of ``func_kwargs`` with ``kwargs``."""
        if not self._override_defaults:
            return dict(kwargs)
        new_args = {
            param: value for param, value in self().items() if param in func_kwargs
        }
        new_args.update(kwargs)
        return new_args


#: The process-wide defaults.
defaults = Defaults()
_defaults = defaults._handler
