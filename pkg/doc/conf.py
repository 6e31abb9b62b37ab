#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# ChronoLens documentation build configuration file.
#
# Executed with the current directory set to doc/.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from chronolens.version import MAJOR_VERSION, FULL_VERSION  # noqa: E402

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.todo',
    'sphinx.ext.viewcode',
    'sphinx.ext.githubpages',
    'sphinx.ext.intersphinx',
    'sphinxjp.themes.basicstrap'
]
intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'sklearn': ('https://scikit-learn.org/stable', None),
}

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'ChronoLens'
copyright = '2026, ChronoLens developers'
author = 'ChronoLens developers'

version = MAJOR_VERSION
release = FULL_VERSION

language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'
todo_include_todos = True

# -- Options for HTML output ----------------------------------------------

html_theme = 'basicstrap'
html_sidebars = {'**': ['globaltoc.html', 'relations.html', 'sourcelink.html', 'searchbox.html'], }
htmlhelp_basename = 'ChronoLensdoc'

# -- Options for LaTeX, manual page and Texinfo output --------------------

latex_documents = [
    (master_doc, 'ChronoLens.tex', 'ChronoLens Documentation', author, 'manual'),
]
man_pages = [
    (master_doc, 'chronolens', 'ChronoLens Documentation', [author], 1)
]
texinfo_documents = [
    (master_doc, 'ChronoLens', 'ChronoLens Documentation', author, 'ChronoLens',
     'Passive spacetime tomography from light arrival times.', 'Miscellaneous'),
]

# -- Autodoc --------------------------------------------------------------

# GitPython is optional at run time, see chronolens.utils.experiment
autodoc_mock_imports = ['git']
autodoc_member_order = 'bysource'


def no_namedtuple_attrib_docstring(app, what, name, obj, options, lines):
    is_namedtuple_docstring = (
        len(lines) == 2 and lines[0].startswith('Alias for field number')
    )
    if is_namedtuple_docstring:
        # purged in place
        del lines[:]


def setup(app):
    app.connect(
        'autodoc-process-docstring',
        no_namedtuple_attrib_docstring,
    )


nitpicky = True
nitpick_ignore = [('py:class', 'numpy.ndarray'), ('py:class', 'GridField'), ('py:class', 'GridSpec')]
