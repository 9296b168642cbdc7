# Configuration file for the Sphinx documentation builder.
#
# http://www.sphinx-doc.org/en/master/config

import os
import sys
sys.path.append("..")
sys.path.insert(0, os.path.abspath('.'))

# -- Project information -----------------------------------------------------

project = "trackkit"
copyright = "2024 Akshay Badola"
author = 'Akshay Badola'


# -- General configuration ---------------------------------------------------

extensions = [
    "myst_parser",
    "sphinx.ext.napoleon",
    "sphinx.ext.intersphinx",
    "sphinx.ext.autosectionlabel",
    "sphinx.ext.viewcode",
    "sphinx.ext.mathjax",
    "autoapi.extension",
]

autodoc_typehints = 'description'
autoapi_dirs = ["../trackkit"]
autoapi_keep_files = True
autoapi_type = "python"
autoapi_root = "api"
autoapi_member_order = "groupwise"

source_suffix = [".rst", ".md"]

# Docstrings are Google style with Args, Returns and Raises sections
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_include_init_with_doc = False
napoleon_use_param = True
napoleon_use_rtype = True

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

autosectionlabel_prefix_document = True

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable', None),
    'aiohttp': ('https://docs.aiohttp.org/en/stable', None),
}

# -- Options for HTML output -------------------------------------------------

html_theme = 'pydata_sphinx_theme'
html_theme_options = {"show_nav_level": 4}


def skip_private(app, what, name, obj, skip, options):
    if "._" in name:
        skip = True
    return skip


def setup(sphinx):
    sphinx.connect("autoapi-skip-member", skip_private)
