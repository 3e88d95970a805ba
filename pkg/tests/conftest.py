import numpy as np
import pytest

from irmbench import risk, sem


@pytest.fixture(params=[v.value for v in sem.Variant])
def variant(request):
    return request.param


def mc_moment_z(spec, e, n, seed):
    """Entrywise z-scores of sample E[XX'], E[XY] against the analytic moments."""
    d = sem.sample_env(spec, e, n, seed)
    m = risk.analytic_moments(spec, e)
    xx = d.x[:, :, None] * d.x[:, None, :]
    z_sig = (xx.mean(0) - m.sigma) / (xx.std(0, ddof=1) / np.sqrt(n))
    xy = d.x * d.y[:, None]
    z_xy = (xy.mean(0) - m.m_xy) / (xy.std(0, ddof=1) / np.sqrt(n))
    return z_sig, z_xy
