"""Reference shape functions and quadrature on triangles.

Two element families live here: the nonconforming piecewise-linear element
with facet-mean degrees of freedom (basis theta_i = 1 - 2*lambda_i) and the
lowest-order H(div) element with normal-flux degrees of freedom (basis
(x - p_i)/(2|T|) in the cell-outward orientation).  Quadrature rules are
product Gauss rules collapsed onto the triangle, exact for all bivariate
polynomials up to the requested degree.
"""

import numpy as np
import mpmath as mp
from dataclasses import dataclass
from sympy import jacobi_poly, legendre_poly, Symbol

MAX_QUAD_DEGREE = 20

_rule_cache = {}
_edge_cache = {}
_gauss_cache = {}


def _gauss_nodes(k, alpha):
    """High-precision Gauss nodes/weights for weight (1-t)^alpha on [-1, 1].

    Roots of the exact orthogonal polynomial are found in 50-digit
    arithmetic and the weights recovered from the moment equations, so the
    float64 rounding at the end is the only error left.  Certification at
    1e-14 on degree-20 monomials does not survive double-precision
    root-finding, hence the detour.
    """
    key = (k, alpha)
    if key in _gauss_cache:
        return _gauss_cache[key]
    s = Symbol("s")
    poly = legendre_poly(k, s) if alpha == 0 else jacobi_poly(k, alpha, 0, s)
    coeffs = [mp.mpf(c.p) / mp.mpf(c.q) for c in poly.as_poly(s).all_coeffs()]
    with mp.workdps(50):
        nodes = sorted(r.real for r in mp.polyroots(coeffs, maxsteps=200, extraprec=120))
        # moments of (1-t)^alpha t^j on [-1,1] for alpha in {0,1}
        moments = []
        for j in range(k):
            mj = mp.mpf(2) / (j + 1) if j % 2 == 0 else mp.mpf(0)
            if alpha == 1:
                mj -= mp.mpf(2) / (j + 2) if j % 2 == 1 else mp.mpf(0)
            moments.append(mj)
        vand = mp.matrix([[nodes[i] ** j for i in range(k)] for j in range(k)])
        weights = mp.lu_solve(vand, mp.matrix(moments))
    out = (np.array([float(t) for t in nodes]),
           np.array([float(w) for w in weights]))
    _gauss_cache[key] = out
    return out


@dataclass(frozen=True)
class QuadratureRule:
    """Triangle rule in barycentric form.

    Attributes
    ----------
    degree : int
        Every bivariate polynomial of total degree <= degree is integrated
        exactly.
    points : ndarray, shape (nq, 3)
        Barycentric coordinates of the nodes.
    weights : ndarray, shape (nq,)
        Weights summing to one; multiply by the cell area at the use site.
    """

    degree: int
    points: np.ndarray
    weights: np.ndarray


def quadrature_rule(degree):
    """Return a triangle quadrature rule exact up to `degree`.

    Built as a tensor rule on the unit square mapped by the collapsed
    (Duffy) transform x = u*(1-v), y = v, whose Jacobian (1-v) is absorbed
    into a Gauss-Jacobi weight.  With k = ceil((degree+1)/2) points per
    direction the rule is exact for all monomials x^m y^n, m+n <= degree.
    """
    if not isinstance(degree, (int, np.integer)) or degree < 1:
        raise ValueError("quadrature degree must be a positive integer")
    if degree > MAX_QUAD_DEGREE:
        raise ValueError(f"quadrature degree {degree} unsupported (max {MAX_QUAD_DEGREE})")
    if degree in _rule_cache:
        return _rule_cache[degree]

    k = (degree + 2) // 2
    tu, wu = _gauss_nodes(k, 0)  # weight 1 on [-1, 1]
    tv, wv = _gauss_nodes(k, 1)  # weight (1-t) on [-1, 1]
    u = 0.5 * (tu + 1.0)
    v = 0.5 * (tv + 1.0)
    # int_0^1 g(u) du = (1/2) sum wu g;  int_0^1 (1-v) g(v) dv = (1/4) sum wv g
    U, V = np.meshgrid(u, v, indexing="ij")
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    w = np.outer(0.5 * wu, 0.25 * wv).ravel()
    # reference triangle area is 1/2; store weights normalized to sum 1
    points = np.column_stack([1.0 - x - y, x, y])
    rule = QuadratureRule(degree, points, w / 0.5)
    _rule_cache[degree] = rule
    return rule


def midpoint_rule():
    """Edge-midpoint rule: weight 1/3 at each midpoint, exact to degree 2.

    On the nonconforming space this rule is exact for products of shape
    functions, so it doubles as the discrete mass inner product.
    """
    points = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    return QuadratureRule(2, points, np.full(3, 1.0 / 3.0))


def seven_point_rule():
    """Closed cubic rule: vertices 1/20, edge midpoints 2/15, centroid 9/20.

    Exact to degree 3.  Unlike interior Gauss rules it samples the cell
    corners, where nonconforming fields carry their largest point values,
    which makes it the natural companion norm for facet-based elements.
    """
    points = np.vstack([
        np.eye(3),
        [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
        [[1.0 / 3.0] * 3],
    ])
    weights = np.array([1.0 / 20.0] * 3 + [2.0 / 15.0] * 3 + [9.0 / 20.0])
    return QuadratureRule(3, points, weights)


def edge_quadrature(npoints=8):
    """Gauss nodes and weights on [0, 1]; weights sum to one.

    `npoints` Gauss points integrate polynomials up to degree 2*npoints - 1
    exactly; the default covers every facet functional used here.
    """
    if npoints in _edge_cache:
        return _edge_cache[npoints]
    t, w = _gauss_nodes(npoints, 0)
    out = (0.5 * (t + 1.0), 0.5 * w)
    _edge_cache[npoints] = out
    return out


def _signed_area(verts):
    d1 = verts[1] - verts[0]
    d2 = verts[2] - verts[0]
    return 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])


def grad_barycentric(verts):
    """Constant gradients of the three barycentric coordinates.

    Parameters
    ----------
    verts : ndarray, shape (3, 2)
        Vertex coordinates, counterclockwise.

    Returns
    -------
    ndarray, shape (3, 2)
        Row i is grad(lambda_i).
    """
    area2 = 2.0 * _signed_area(verts)
    if area2 == 0.0:
        raise ValueError("degenerate cell: zero area")
    g = np.empty((3, 2))
    for i in range(3):
        e = verts[(i + 2) % 3] - verts[(i + 1) % 3]
        # rotate the opposite edge; lambda_i grows away from it
        g[i, 0] = -e[1] / area2
        g[i, 1] = e[0] / area2
    return g


def barycentric(verts, x):
    """Barycentric coordinates of point(s) `x` in the given cell.

    `x` may be a single 2-vector or an (n, 2) array; returns shape (3,) or
    (n, 3) accordingly, with the triple summing to one.
    """
    x = np.asarray(x, dtype=float)
    g = grad_barycentric(verts)
    const = 1.0 / 3.0 - (verts.mean(axis=0) @ g.T)
    lam = x @ g.T + const
    return lam


def cr_eval(verts, i, x):
    """Value of basis function theta_i = 1 - 2*lambda_i at `x`."""
    lam = barycentric(verts, x)
    return 1.0 - 2.0 * lam[..., i]


def cr_grad(verts, i):
    """Constant gradient of theta_i on the cell."""
    return -2.0 * grad_barycentric(verts)[i]


def rt0_eval(verts, i, x):
    """Value of the i-th flux basis, cell-outward orientation.

    The basis is (x - p_i)/(2|T|); its integral flux through edge j against
    the outward normal is the Kronecker delta_ij.  Orientation against a
    globally stored facet normal is applied by the caller via a +-1 sign.
    """
    x = np.asarray(x, dtype=float)
    area = _signed_area(verts)
    if area == 0.0:
        raise ValueError("degenerate cell: zero area")
    return (x - verts[i]) / (2.0 * area)


def rt0_div(verts, i):
    """Constant divergence of the i-th flux basis (outward orientation)."""
    area = _signed_area(verts)
    if area == 0.0:
        raise ValueError("degenerate cell: zero area")
    return 1.0 / area
