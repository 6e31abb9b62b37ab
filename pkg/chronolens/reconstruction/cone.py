import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import DegenerateSpan, NonLorentzianFit

logger = logging.getLogger('reconstruction.cone')

ConformalEstimate = namedtuple('ConformalEstimate', ['target_id', 'form', 'normalization', 'singular_ratio',
                                                     'residuals', 'eigenvalues'])
ConformalEstimate.__doc__ = """
The null cone at a target fitted as a quadratic form, i.e. the conformal class of the metric in chart coordinates.

:param target_id: id of the target source
:param form: symmetric n x n array C
:param normalization: :data:`NORMALIZATION`
:param singular_ratio: smallest over second smallest singular value of the design matrix
:param residuals: |vᵀ C v| per unit direction v
:param eigenvalues: eigenvalues of C in ascending order
"""

#: unit Frobenius norm, sign chosen so that C has exactly one negative eigenvalue
NORMALIZATION = 'frobenius_unit_one_negative'


def lorentzian(form, tol=1e-10):
    eigenvalues = np.linalg.eigvalsh(form)
    return np.sum(eigenvalues < -tol) == 1 and np.sum(eigenvalues > tol) == len(eigenvalues) - 1


def normalize_form(form):
    """
    Scales a symmetric form to unit Frobenius norm and fixes the sign so that it has signature (-, +, ..., +).
    Forms that are Lorentzian for neither sign get C₀₀ < 0 instead.
    """
    form = np.asarray(form, dtype=float)
    form = 0.5 * (form + form.T)
    form = form / np.linalg.norm(form)
    if lorentzian(-form) or (not lorentzian(form) and form[0, 0] > 0):
        form = -form
    return form


def _design_row(v):
    n = len(v)
    row = [v[i] * v[i] for i in range(n)]
    row += [np.sqrt(2.) * v[i] * v[j] for i in range(n) for j in range(i + 1, n)]
    return row


def _unpack(coefficients, n):
    form = np.diag(coefficients[:n])
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            form[i, j] = form[j, i] = coefficients[k] / np.sqrt(2.)
            k += 1
    return form


def fit_null_cone(directions, target_id=None, span_tol=1e-8):
    """
    Total least squares fit of the quadratic form whose null cone contains the given directions:
    minimizes Σ (vᵀ C v)² over symmetric C with unit Frobenius norm. The off-diagonal unknowns carry a factor
    √2, so that the unit singular vector of the design matrix is a form of unit Frobenius norm.

    :param directions: array (m, n) of tangent directions, normalized before the fit
    :param target_id: id stamped on the estimate
    :param span_tol: the second smallest singular value relative to the largest below which the directions do
        not determine the form
    :raises DegenerateSpan: with fewer than n(n+1)/2 - 1 directions or when they do not span
    :raises NonLorentzianFit: when the fitted form is not Lorentzian
    :return: :class:`ConformalEstimate`
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    m, n = directions.shape
    unknowns = n * (n + 1) // 2
    if m < unknowns - 1:
        raise DegenerateSpan("{} directions cannot determine a cone in dimension {}, need {}".format(
            m, n, unknowns - 1))
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    design = np.array([_design_row(v) for v in directions])
    _, singular, vt = np.linalg.svd(design, full_matrices=True)
    padded = np.zeros(unknowns)
    padded[:len(singular)] = singular[:unknowns]
    if padded[unknowns - 2] <= span_tol * padded[0]:
        raise DegenerateSpan("Directions do not span: singular values {}".format(padded.tolist()))
    form = normalize_form(_unpack(vt[-1], n))
    eigenvalues = np.linalg.eigvalsh(form)
    if not lorentzian(form):
        raise NonLorentzianFit(eigenvalues.tolist())
    residuals = np.abs(np.einsum('mi,ij,mj->m', directions, form, directions))
    ratio = float(padded[unknowns - 1] / padded[unknowns - 2])
    logger.debug("Cone fit at %s from %d directions: singular ratio %.3g, max residual %.3g", target_id, m, ratio,
                 residuals.max())
    return ConformalEstimate(target_id, form, NORMALIZATION, ratio, residuals, eigenvalues)


def conformal_class_distance(a, b):
    """
    Frobenius distance of two forms after normalizing both, minimized over the relative sign.

    :param a: :class:`ConformalEstimate` or symmetric array
    :param b: :class:`ConformalEstimate` or symmetric array of the same dimension
    """
    a = normalize_form(a.form if isinstance(a, ConformalEstimate) else a)
    b = normalize_form(b.form if isinstance(b, ConformalEstimate) else b)
    if a.shape != b.shape:
        raise ValueError("Forms of different dimension {} and {}".format(a.shape, b.shape))
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))
