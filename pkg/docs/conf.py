# Configuration file for the Sphinx documentation builder.
import os
import sys

from pkg_resources import get_distribution

sys.path.insert(0, os.path.abspath(".."))

__version__ = get_distribution("reachcore").version

project = "reachcore"
copyright = "2021, the reachcore developers"
author = "the reachcore developers"
version = __version__
release = __version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.doctest",
    "sphinx.ext.intersphinx",
    "sphinx.ext.todo",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "sphinx.ext.autosectionlabel",
    "sphinx.ext.napoleon",
]
autosectionlabel_prefix_document = True
autosummary_generate = True

source_suffix = ".rst"
master_doc = "index"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"

html_theme = "sphinx_rtd_theme"
htmlhelp_basename = "reachcoredoc"

latex_documents = [
    (master_doc, "reachcore.tex", "reachcore Documentation", author, "manual"),
]
man_pages = [(master_doc, "reachcore", "reachcore Documentation", [author], 1)]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}

todo_include_todos = True
napoleon_use_ivar = True
napoleon_use_rtype = False
napoleon_use_param = False
autodoc_typehints = "signature"
