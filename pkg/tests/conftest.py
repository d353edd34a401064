import copy
import json
import os

import pytest

from sleepscale.data import TABLES_DIR, load_power_table
from sleepscale.power import sleep_catalog
from sleepscale.workload import ArrivalSpec, ServiceSpec, generate, workload_preset


XEON = os.path.join(TABLES_DIR, 'xeon.json')


@pytest.fixture(scope='session')
def table():
    return load_power_table(XEON)


@pytest.fixture(scope='session')
def raw_table():
    with open(XEON) as f:
        data = json.load(f)
    return data


@pytest.fixture
def table_doc(raw_table):
    """A mutable copy of the packaged table document."""
    return copy.deepcopy(raw_table)


@pytest.fixture(scope='session')
def catalog(table):
    return sleep_catalog(table)


@pytest.fixture(scope='session')
def dns_specs():
    return workload_preset('dns').specs(rho=0.1)


@pytest.fixture(scope='session')
def dns_stream(dns_specs):
    arrivals, service = dns_specs
    return generate(arrivals, service, 10_000, seed=7)


@pytest.fixture(scope='session')
def mm1_stream():
    """Poisson arrivals at 0.3/s, exponential service at 1/s."""
    return generate(ArrivalSpec.exponential(0.3), ServiceSpec.exponential(1.0), 20_000, seed=11)
