import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_dataset(rng, n=300, q=8, p=3, family="gaussian", sigma_u=0.5, phi=0.1):
    """Linear-predictor data for quick fits."""
    from glmmnet.data import Dataset
    from glmmnet.ed_family import get_family, get_link

    fam = get_family(family)
    link = get_link(fam.default_link)
    X = rng.uniform(size=(n, p))
    cat = np.arange(n) % q
    rng.shuffle(cat)
    u = rng.normal(0.0, sigma_u, q)
    eta = 0.3 + X @ np.linspace(0.5, -0.5, p) + u[cat]
    if fam.name == "poisson":
        eta = eta + 0.5
    mu = fam.clip_mean(link.inverse(eta))
    y = fam.rvs(mu, 1.0 if fam.fixed_dispersion else phi, rng)
    return Dataset(X, cat, y, q), u


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    """Store one acceptance-criterion verdict for the end-of-run summary."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
