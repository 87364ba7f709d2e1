# Sphinx configuration for the niche_nas documentation.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import sys, os
sys.path.insert(0, os.path.abspath("../.."))

import niche_nas


project = 'niche_nas'
copyright = '2026, niche_nas developers'
author = 'niche_nas developers'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosummary',
    'sphinx.ext.napoleon',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.githubpages',
]

# numpy-style docstrings only
napoleon_google_docstring = False
napoleon_numpy_docstring = True

autosummary_generate = True
autodoc_default_options = {
    'members': True,
    'undoc-members': False,
    'show-inheritance': True,
}
autodoc_mock_imports = ['matplotlib']

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'requests': ('https://requests.readthedocs.io/en/latest/', None),
}

templates_path = ['_templates']
exclude_patterns = []

# So that `EngineConfig` compiles to API links without :py:class:
default_role = "any"

# https://sphinxawesome.xyz/how-to/configure/
html_theme = 'sphinxawesome_theme'
from sphinxawesome_theme.postprocess import Icons
pygments_style = "friendly"
pygments_style_dark = "friendly"
html_permalinks_icon = Icons.permalinks_icon
html_static_path = ['_static']
html_css_files = ["custom.css"]
html_title = "niche_nas"
