import math

import pytest

from triphon.config import default_config, resolve_params


@pytest.fixture(scope="session")
def table1():
    """Reference parameters with the exchange-cancelling Cc solved."""
    params, _ = resolve_params(default_config())
    return params


@pytest.fixture(scope="session")
def table1_nominal():
    """Reference parameters at the nominal Cc = 9.7 fF (no cancellation)."""
    cfg = default_config()
    cfg.circuit["cc_auto_cancel"] = False
    params, _ = resolve_params(cfg)
    return params


@pytest.fixture(scope="session")
def omega_m():
    return 2.0 * math.pi * 10e6
