import numpy as np
import pytest

from mmdml import DgpConfig, ModalitySpec, generate
from mmdml.core import NuisancePredictions


def three_modality_config(n=2000, rho=1.0, seed=7, feature_dim=5, link="linear", theta0=0.5, snr=2.0):
    return DgpConfig(
        n=n,
        theta0=theta0,
        snr=snr,
        seed=seed,
        modality_specs=tuple(
            ModalitySpec(name=name, feature_dim=feature_dim, rho=rho, link=link) for name in ("tab", "txt", "img")
        ),
    )


@pytest.fixture(scope="session")
def small_ds():
    return generate(three_modality_config(n=2000, seed=7))


@pytest.fixture(scope="session")
def paper_scale_ds():
    """n = 50,000, three fully explainable channels, snr 2, theta0 0.5."""
    return generate(three_modality_config(n=50_000, seed=20240501))


@pytest.fixture(scope="session")
def desk_ds():
    """Benchmark-size dataset with partially explainable confounding."""
    return generate(three_modality_config(n=20_000, rho=0.9, seed=20240502))


def oracle_preds(ds):
    return NuisancePredictions(
        l_hat=ds.oracle.l0.copy(),
        m_hat=ds.oracle.m0.copy(),
        fold_id=np.zeros(ds.n, dtype=int),
        learner_tag="oracle",
    )
