import itertools
import json
import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import SupportOverlap
from chronolens.utils.environment import Environment
from chronolens.waves.grid import GridField, make_field, support_box, wave_speed
from chronolens.waves.scan import scan_table_to_dict
from chronolens.waves.solver import causal_solve, l2_norm, nonlinear_solve, relative_error, coefficient_field

logger = logging.getLogger('waves.interaction')

WaveParameters = namedtuple('WaveParameters', ['a', 'epsilons', 'delta', 'method', 'picard_tol', 'probe'])
WaveParameters.__doc__ = """
:param a: coefficient of the quadratic term, scalar or spatial array
:param epsilons: source amplitudes of the remainder study, at least four spanning a decade
:param delta: step of the mixed difference, None for :func:`default_delta`
:param method: 'direct' or 'picard' nonlinear solves
:param picard_tol: relative update at which Picard iteration stops
:param probe: (lower, upper) space-time box checked against boundary reflections, None to skip the check
"""


def default_wave_parameters(**overrides):
    parameters = WaveParameters(a=1., epsilons=(1e-2, 5e-3, 2e-3, 1e-3), delta=None, method='direct',
                                picard_tol=1e-10, probe=None)
    return parameters._replace(**overrides)


ExpansionTerms = namedtuple('ExpansionTerms', ['w1', 'w2', 'w3', 'w4'])
ExpansionTerms.__doc__ = """
Terms of u_ε = Σ_j ε^j w_j + O(ε⁵) for □u + a u² = ε f, each a :class:`~chronolens.waves.grid.GridField`.
"""

ExpansionRemainders = namedtuple('ExpansionRemainders', ['epsilons', 'norms', 'slope'])
ExpansionRemainders.__doc__ = """
:param epsilons: the amplitudes ε
:param norms: L² norms of u_ε - Σ_{j≤4} ε^j w_j
:param slope: least squares slope of log norm over log ε, None when a remainder vanishes
"""

ExpansionReport = namedtuple('ExpansionReport', ['epsilons', 'norms', 'slope', 'interaction_error', 'delta',
                                                 'interaction_norm', 'scan'])
ExpansionReport.__doc__ = """
:param epsilons: amplitudes of the remainder study
:param norms: remainder norms
:param slope: fitted log-log slope of the remainders
:param interaction_error: relative L² error of the mixed difference against the formula for M⁽⁴⁾
:param delta: step of the mixed difference
:param interaction_norm: L² norm of M⁽⁴⁾ from the formula
:param scan: :class:`~chronolens.waves.scan.ScanTable` or None
"""


def _solver(grid):
    def solve(values):
        return causal_solve(GridField(grid, values)).values
    return solve


def expansion_terms(grid, a, f):
    """
    w₁ = Q f, w₂ = -Q(a w₁ w₁), w₃ = 2 Q(a w₁ Q(a w₁ w₁)), w₄ = -Q(a w₂ w₂) - 2 Q(a w₁ w₃)

    :return: :class:`ExpansionTerms`
    """
    a = coefficient_field(grid, a)
    solve = _solver(grid)
    w1 = solve(f.values)
    squared = solve(a * w1 * w1)
    w2 = -squared
    w3 = 2. * solve(a * w1 * squared)
    w4 = -solve(a * w2 * w2) - 2. * solve(a * w1 * w3)
    return ExpansionTerms(*(make_field(grid, w) for w in (w1, w2, w3, w4)))


def expansion_remainders(grid, a, f, epsilons, terms=None, method='direct', tol=1e-10):
    """
    Remainders of the fourth order expansion at each ε and their log-log slope, which is 5 for a smooth
    nonlinearity.

    :raises ValueError: with fewer than four amplitudes or when they span less than a decade
    :return: :class:`ExpansionRemainders`
    """
    epsilons = [float(e) for e in epsilons]
    if len(epsilons) < 4 or max(epsilons) < 10. * min(epsilons) or min(epsilons) <= 0:
        raise ValueError("The slope fit needs at least four positive amplitudes spanning a decade, got {}".format(
            epsilons))
    terms = terms or expansion_terms(grid, a, f)
    norms = []
    for eps in epsilons:
        u = nonlinear_solve(grid, a, f, eps, method, tol)
        expansion = sum(eps ** (j + 1) * w.values for j, w in enumerate(terms))
        norms.append(l2_norm(GridField(grid, u.values - expansion)))
    slope = None
    if min(norms) > 0:
        slope = float(np.polyfit(np.log(epsilons), np.log(norms), 1)[0])
    logger.info("Expansion remainders %s, slope %s", ['%.3g' % n for n in norms], slope)
    return ExpansionRemainders(epsilons, norms, slope)


def check_causal_independence(sources):
    """
    Refuses sources where one support meets the causal future of another, checked on the support boxes with
    the largest coordinate wave speed: box j meets J⁺(box k) when its last time is after the first time of box
    k and the spatial gap of the boxes is within reach of the waves started there.

    :raises SupportOverlap: naming the offending pair
    """
    boxes = [support_box(source) for source in sources]
    grid = sources[0].grid
    speed = wave_speed(grid.background, grid.lower, grid.upper, grid.h)
    for j, k in itertools.permutations(range(len(sources)), 2):
        if boxes[j] is None or boxes[k] is None:
            continue
        (lower_j, upper_j), (lower_k, upper_k) = boxes[j], boxes[k]
        elapsed = upper_j[0] - lower_k[0]
        if elapsed < 0:
            continue
        gap = np.maximum(0., np.maximum(lower_j[1:] - upper_k[1:], lower_k[1:] - upper_j[1:]))
        if np.linalg.norm(gap) <= speed * elapsed:
            raise SupportOverlap("Support of source {} meets the causal future of source {}".format(j + 1, k + 1))


def fourth_interaction_formula(grid, a, sources):
    """
    M⁽⁴⁾ = -Σ_σ [Q(a Q(a u_σ1 u_σ2) Q(a u_σ3 u_σ4)) + 4 Q(a u_σ1 Q(a u_σ2 Q(a u_σ3 u_σ4)))] over all
    permutations σ of the four sources, u_j = Q f_j. The 24 permutations collapse to 8 copies of each of the
    three pair partitions and 8 copies of each of the twelve nested terms (σ2; {σ3, σ4}), so the inner solves
    are cached per unordered pair, each nested solve is added to the integrand as soon as it is done, and the
    outer Q is applied once to the summed integrand.

    :param sources: four :class:`~chronolens.waves.grid.GridField`
    :raises SupportOverlap: unless the supports are pairwise causally independent
    :return: :class:`~chronolens.waves.grid.GridField`
    """
    if len(sources) != 4:
        raise ValueError("The fourth order interaction needs four sources, got {}".format(len(sources)))
    check_causal_independence(sources)
    a = coefficient_field(grid, a)
    solve = _solver(grid)
    u = [solve(source.values) for source in sources]
    pairs = {}
    for i, j in itertools.combinations(range(4), 2):
        pairs[i, j] = solve(a * u[i] * u[j])

    integrand = np.zeros_like(u[0])
    for j in (1, 2, 3):
        rest = [k for k in (1, 2, 3) if k != j]
        integrand += 8. * a * pairs[0, j] * pairs[rest[0], rest[1]]
    for s2 in range(4):
        for s3, s4 in itertools.combinations([k for k in range(4) if k != s2], 2):
            s1 = 6 - s2 - s3 - s4
            integrand += 8. * a * u[s1] * solve(a * u[s2] * pairs[s3, s4])
    return make_field(grid, -solve(integrand))


def default_delta(sources):
    """
    1e-2 over the largest amplitude of the linear waves Q f_j, so that every corner solve stays in the weakly
    nonlinear regime while the fourth order term is far above rounding.
    """
    scale = max(float(np.max(np.abs(causal_solve(source).values))) for source in sources)
    return 1e-2 / scale if scale > 0 else 1e-2


def _corner_solve(item):
    grid, a, sources, signs, delta, method, tol = item
    forcing = sum(sign * delta * source.values for sign, source in zip(signs, sources))
    return nonlinear_solve(grid, a, GridField(grid, forcing), 1., method, tol).values


def fourth_interaction_finite_difference(grid, a, sources, delta=None, method='direct', tol=1e-10,
                                         environment=None):
    """
    M⁽⁴⁾ ≈ (1 / (16 δ⁴)) Σ_{σ ∈ {±1}⁴} (Π σ_i) u_{σδ}, the mixed fourth derivative of u_ε⃗ at 0 from the
    16 nonlinear solves with sources Σ σ_i δ f_i. The error is O(δ²).

    :param environment: :class:`~chronolens.utils.environment.Environment` running the corner solves
    :return: :class:`~chronolens.waves.grid.GridField`
    """
    if len(sources) != 4:
        raise ValueError("The fourth order interaction needs four sources, got {}".format(len(sources)))
    environment = environment or Environment()
    delta = default_delta(sources) if delta is None else float(delta)
    corners = list(itertools.product((1., -1.), repeat=4))
    solutions = environment.map(_corner_solve, [(grid, a, sources, signs, delta, method, tol)
                                                for signs in corners])
    total = np.zeros_like(solutions[0])
    for signs, solution in zip(corners, solutions):
        total += np.prod(signs) * solution
    return make_field(grid, total / (16. * delta ** 4))


def make_expansion_report(remainders, formula=None, difference=None, delta=None, scan=None):
    """
    :param formula: M⁽⁴⁾ from the formula, None for experiments without four sources
    """
    if formula is None:
        return ExpansionReport(remainders.epsilons, remainders.norms, remainders.slope, None, None, None, scan)
    error = relative_error(difference, formula)
    logger.info("M4 formula against mixed difference: relative error %.3g", error)
    return ExpansionReport(remainders.epsilons, remainders.norms, remainders.slope, error, delta,
                           l2_norm(formula), scan)


def expansion_report_to_dict(report, config_hash=None):
    scan = report.scan
    return dict(kind='expansion_report', config_hash=config_hash, epsilons=list(report.epsilons),
                remainder_norms=list(report.norms), slope=report.slope, delta=report.delta,
                interaction_error=report.interaction_error, interaction_norm=report.interaction_norm,
                scan=None if scan is None else scan_table_to_dict(scan))


def write_expansion_report(report, fh, config_hash=None):
    fh.write(json.dumps(expansion_report_to_dict(report, config_hash), sort_keys=True, indent=2) + '\n')
