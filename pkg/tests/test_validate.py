import pytest

from sleepscale.errors import PowerTableError
from sleepscale.power import PowerTable
from sleepscale.validate import validate_power_config


def test_packaged_table_is_valid(table_doc):
    validate_power_config(table_doc, 'xeon.json')
    table = PowerTable.from_config(table_doc, 'xeon.json')
    assert table.name == 'xeon'
    assert table.latency_bounds['C6S3'] == (1.0, 10.0)


def test_missing_section(table_doc):
    del table_doc['sleep_states']
    with pytest.raises(PowerTableError, match='does not contain the "sleep_states" section'):
        validate_power_config(table_doc, 'test')


def test_incorrect_fields(table_doc):
    table_doc['cpu_states'][0]['watts'] = table_doc['cpu_states'][0].pop('coefficient')
    with pytest.raises(PowerTableError, match='incorrect fields'):
        validate_power_config(table_doc, 'test')


def test_duplicate_cpu_state(table_doc):
    table_doc['cpu_states'].append(dict(table_doc['cpu_states'][-1]))
    with pytest.raises(PowerTableError, match='duplicate'):
        validate_power_config(table_doc, 'test')


def test_unknown_power_law(table_doc):
    table_doc['cpu_states'][2]['law'] = 'quartic'
    with pytest.raises(PowerTableError, match='invalid power law'):
        validate_power_config(table_doc, 'test')


def test_negative_number(table_doc):
    table_doc['platform_states'][2]['watts'] = '-1'
    with pytest.raises(PowerTableError, match='negative'):
        validate_power_config(table_doc, 'test')


def test_non_numeric(table_doc):
    table_doc['cpu_states'][0]['coefficient'] = 'lots'
    with pytest.raises(PowerTableError, match='not a number'):
        validate_power_config(table_doc, 'test')


def test_platform_ordering(table_doc):
    table_doc['platform_states'][2]['watts'] = '70'
    with pytest.raises(PowerTableError, match='draws less power'):
        validate_power_config(table_doc, 'test')


def test_compatibility_unknown_state(table_doc):
    table_doc['compatibility'].append(['C7', 'S0_idle'])
    with pytest.raises(PowerTableError, match='does not exist: "C7"'):
        validate_power_config(table_doc, 'test')


def test_sleep_state_incompatible_pair(table_doc):
    table_doc['sleep_states'][1]['platform'] = 'S3'
    with pytest.raises(PowerTableError, match='not a compatible pair'):
        validate_power_config(table_doc, 'test')


def test_empty_latency_range(table_doc):
    table_doc['sleep_states'][4]['min_latency'] = '20'
    with pytest.raises(PowerTableError, match='empty'):
        validate_power_config(table_doc, 'test')
