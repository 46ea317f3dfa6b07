"""Discoverability of benchmark models by name and alias."""

from __future__ import annotations

from abc import ABCMeta, abstractmethod
from collections import defaultdict
from copy import deepcopy
from types import new_class
from typing import Dict, Optional, Tuple, Type

from .defaults import defaults

_available_components = {}


class ReachComponent(metaclass=ABCMeta):
    """Base class for named, discoverable models of a component.

    Concrete subclasses register themselves under their lower-cased class
    name and every entry of ``_alias``. Optional parameters are given at
    instantiation and may be overridden when the instance is called; active
    package defaults (see :mod:`~.defaults`) are applied in between.
    """

    _alias: Tuple[str, ...] = tuple()

    def __init_subclass__(cls, is_abstract: bool = False):
        super().__init_subclass__()
        if not is_abstract:
            for name in cls.get_aliases():
                cls._models[name] = cls

    @classmethod
    def get_aliases(cls) -> Tuple[str, ...]:
        """All names by which this model can be identified."""
        return (cls.__name__.lower(),) + cls._alias

    def __init__(self, **kwargs):
        self.kwargs = kwargs

    @abstractmethod
    def __call__(self, **kwargs):
        """Build the model."""

    def _check_kwargs(self, **kwargs):
        unknown = [key for key in kwargs if key not in self.kwargs]
        if unknown:
            raise ValueError(
                "The following keywords are not supported: " + ", ".join(unknown)
            )

    def _extract_kwarg_values(self, **kwargs):
        """Instantiation parameters, then active defaults, then call keywords."""
        use_kwargs = self.kwargs.copy()
        use_kwargs.update(defaults.apply(use_kwargs, **kwargs))
        return use_kwargs.values()

    @classmethod
    def get_models(cls, with_aliases=False) -> Dict[str, Type[ReachComponent]]:
        if with_aliases:
            return deepcopy(cls._models)
        return {model.__name__.lower(): model for model in set(cls._models.values())}

    @classmethod
    def get_model(cls, mdl: str) -> Type[ReachComponent]:
        try:
            return cls._models[mdl.lower()]
        except KeyError:
            raise KeyError(
                f"Unknown {cls.__name__.lower()} '{mdl}'. Available: "
                + ", ".join(sorted(cls._models))
            )


def component(cls):
    """Turn ``cls`` into an abstract :class:`ReachComponent` that tracks its models."""
    cls._models = {}
    # rebuild the class with ReachComponent as its base; the decorated class
    # itself is abstract and never registered
    cls = new_class(
        name=cls.__name__,
        bases=(ReachComponent,),
        kwds={"is_abstract": True},
        exec_body=lambda namespace: namespace.update(dict(cls.__dict__)),
    )
    _available_components[cls.__name__] = cls
    if cls.__doc__ is None:
        cls.__doc__ = ""
    return cls


def get_all_components(
    with_aliases=False,
) -> Dict[str, Dict[str, Type[ReachComponent]]]:
    return {
        name.lower(): cmp.get_models(with_aliases)
        for name, cmp in _available_components.items()
    }


def get_models(cmp: str, with_aliases: bool = False) -> Dict[str, Type[ReachComponent]]:
    return get_all_components(with_aliases)[cmp.lower()]


def get_model(mdl: str, cmp: Optional[str] = None) -> Type[ReachComponent]:
    """Get a model class by name or alias, optionally within one component."""
    if cmp:
        return _available_components_lower()[cmp.lower()].get_model(mdl)
    for models in get_all_components(with_aliases=True).values():
        if mdl.lower() in models:
            return models[mdl.lower()]
    raise KeyError(f"No model named '{mdl}'.")


def _available_components_lower():
    return {name.lower(): cmp for name, cmp in _available_components.items()}


def list_all_components(with_aliases: bool = True) -> str:
    """A text listing of every component and its models."""
    out = ""
    for cmp, models in get_all_components(with_aliases).items():
        out += f"{cmp}:\n"
        model_to_name = defaultdict(list)
        for name, model in models.items():
            model_to_name[model].append(name)
        for names in model_to_name.values():
            out += "  " + " | ".join(names) + "\n"
    return out
