import numpy as np
import pytest

import foltrace as ft

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@pytest.fixture(scope="session")
def product_model():
    return ft.build_model(2, 1, [[1.0], [0.0]])


@pytest.fixture(scope="session")
def kronecker_model():
    return ft.build_model(2, 1, [[1.0], [GOLDEN]])


@pytest.fixture(scope="session")
def torus3_model():
    return ft.build_model(3, 1, [[1.0], [0.0], [0.0]])


@pytest.fixture(scope="session")
def drift_model():
    return ft.build_model(2, 1, [[1.0], [0.0]], drift=[0.0, 0.1])


@pytest.fixture(scope="session")
def product_kernel(product_model):
    return ft.build_kernel(product_model, support=0.5)


@pytest.fixture(scope="session")
def kronecker_kernel(kronecker_model):
    return ft.build_kernel(kronecker_model, support=2.0)


@pytest.fixture(scope="session")
def torus3_kernel(torus3_model):
    return ft.build_kernel(torus3_model, support=1.0)


@pytest.fixture(scope="session")
def product_table(product_model, product_kernel):
    return ft.enumerate_spectrum(product_model, 550.0, kernel=product_kernel)


@pytest.fixture(scope="session")
def kronecker_table(kronecker_model, kronecker_kernel):
    return ft.enumerate_spectrum(
        kronecker_model, 9000.0, kernel=kronecker_kernel, leaf_rel_tol=1e-11
    )


@pytest.fixture(scope="session")
def torus3_table(torus3_model, torus3_kernel):
    return ft.enumerate_spectrum(torus3_model, 300.0, kernel=torus3_kernel, leaf_cutoff=260.0)


def random_flat_model(rng, with_drift=False):
    """Random small flat model: mixed rational/irrational leaves, random SPD metric."""
    n = int(rng.integers(2, 5))
    p = int(rng.integers(1, n))
    while True:
        basis = rng.normal(size=(n, p))
        if rng.random() < 0.4:
            basis = np.round(basis * 3.0)  # rational, possibly sparse
        if np.linalg.matrix_rank(basis) == p and np.abs(basis).max() > 0.1:
            break
    a = rng.normal(size=(n, n))
    metric = a @ a.T + n * np.eye(n)
    metric /= np.linalg.eigvalsh(metric).max() / 2.0
    drift = None
    model = ft.build_model(n, p, basis, metric=metric)
    if with_drift:
        raw = rng.normal(size=n)
        h_part = model.proj_h @ raw
        nrm = float(np.sqrt(h_part @ metric @ h_part))
        if nrm > 1e-9:
            drift = 0.3 * h_part / nrm
            model = ft.build_model(n, p, basis, metric=metric, drift=drift)
    return model
