import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cartan_lab.dsl import PhasePoint, parse_metric
from cartan_lab.suite import sample_points

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EUC = ("p1^2+p2^2", 2, "K-squared")
HYP2 = ("x2^2*(p1^2+p2^2)", 2, "K-squared")
HYP2S = ("4*x2^2*(p1^2+p2^2)", 2, "K-squared")
RAND2 = ("sqrt(p1^2+p2^2)+0.1*p1", 2, "K")
RAND3 = ("sqrt(p1^2+p2^2+p3^2)+0.05*p1", 3, "K")
# round sphere in stereographic coordinates, sectional curvature +1
SPHERE = ("(1+x1^2+x2^2)^2*(p1^2+p2^2)/4", 2, "K-squared")
# x-dependent, non-Riemannian: exercises N, R and g_ijk together
WARPED = ("sqrt(exp(x1)*p1^2+p2^2+x2*p1*p2)+0.2*sin(x2)*p1", 2, "K")
CONF3 = ("x3^2*(p1^2+p2^2+p3^2)*(1+0.1*x1)", 3, "K-squared")

BOX = {"HYP2": [[-1, 1], [0.5, 2]], "HYP2S": [[-1, 1], [0.5, 2]], "CONF3": [[-1, 1], [-1, 1], [0.5, 2]]}
METRICS = {"EUC": EUC, "HYP2": HYP2, "HYP2S": HYP2S, "RAND2": RAND2, "RAND3": RAND3,
           "SPHERE": SPHERE, "WARPED": WARPED, "CONF3": CONF3}


def metric(name):
    text, dim, kind = METRICS[name]
    return parse_metric(text, dim, kind)


def points(name, count, seed=0):
    m = metric(name)
    box = BOX.get(name, [[-1.0, 1.0]] * m.dim)
    return sample_points(m, box, seed, count)[0]


def pp(x, p):
    return PhasePoint(tuple(x), tuple(p))


@pytest.fixture(params=["EUC", "HYP2", "RAND2", "WARPED", "RAND3"])
def any_metric(request):
    return request.param


def close(a, b, tol):
    return np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))) <= tol
