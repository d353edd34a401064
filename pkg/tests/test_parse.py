import json

import pytest

from sleepscale.errors import ParseError, RangeError
from sleepscale.parse import (parse_distribution, parse_frequencies, parse_latencies, parse_policy, parse_sleep,
                              parse_surges, read_config)


def test_parse_sleep_immediate(catalog):
    seq = parse_sleep('C6S3', catalog)
    assert seq.label == 'C6S3'
    assert seq[0].wakeup_latency == 1.0


@pytest.mark.parametrize('text', ['C0iS0i>C6S3@10', 'C0iS0i@0, C6S3@10', 'C0iS0i > C6S3@1e1'])
def test_parse_sleep_delayed(catalog, text):
    assert parse_sleep(text, catalog).label == 'C0iS0i>C6S3@10'


@pytest.mark.parametrize('text', ['none', '', None])
def test_parse_sleep_empty(catalog, text):
    assert not parse_sleep(text, catalog)


def test_parse_sleep_unknown_state(catalog):
    with pytest.raises(ParseError, match='does not exist'):
        parse_sleep('C7S3', catalog)


def test_parse_sleep_bad_delay(catalog):
    with pytest.raises(ParseError):
        parse_sleep('C6S3@soon', catalog)


def test_parse_policy(table):
    policy = parse_policy('0.42/C6S3', table)
    assert policy.f == 0.42
    assert policy.sleep_label == 'C6S3'
    assert parse_policy('0.5', table).sleep_label == 'none'


def test_parse_policy_evaluates_states_at_f(table):
    policy = parse_policy('0.5/C1S0i', table)
    assert policy.sleep[0].power == pytest.approx(47 * 0.25 + 60.5)


def test_parse_policy_latency_override(table):
    assert parse_policy('1/C6S3', table, {'C6S3': 4.0}).sleep[0].wakeup_latency == 4.0


@pytest.mark.parametrize('text', ['0/C6S3', '1.5/C6S3'])
def test_parse_policy_bad_frequency(table, text):
    with pytest.raises(RangeError):
        parse_policy(text, table)


def test_parse_latencies():
    assert parse_latencies(['C6S3=2', 'C3S0i = 5e-5']) == {'C6S3': 2.0, 'C3S0i': 5e-5}
    with pytest.raises(ParseError):
        parse_latencies(['C6S3'])
    with pytest.raises(RangeError):
        parse_latencies(['C6S3=-1'])


def test_parse_distribution():
    assert parse_distribution('exp:2.5').rate == 2.5
    lognormal = parse_distribution('lognormal:0.2:1.9')
    assert (lognormal.kind, lognormal.mean, lognormal.cv) == ('lognormal', 0.2, 1.9)
    service = parse_distribution('values:0.1,0.2', service=True, beta=0.5)
    assert service.values == (0.1, 0.2)
    assert service.cpu_bound_fraction == 0.5
    with pytest.raises(ParseError):
        parse_distribution('gamma:1:2')


def test_parse_frequencies():
    assert parse_frequencies('0.3, 0.5,1') == [0.3, 0.5, 1.0]
    assert parse_frequencies('0.5:1:0.25') == [0.5, 0.75, 1.0]
    with pytest.raises(RangeError):
        parse_frequencies('1:0.5:0.1')
    with pytest.raises(ParseError):
        parse_frequencies('0.1:1')


def test_parse_surges():
    assert parse_surges('10:5:0.9,100:2:0.7') == ((10, 5, 0.9), (100, 2, 0.7))
    assert parse_surges(None) == ()
    with pytest.raises(RangeError):
        parse_surges('10:5:1.5')


def test_read_config(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'num-jobs': 500, 'seed': 3}))
    assert read_config(str(path)) == {'num_jobs': 500, 'seed': 3}


def test_read_config_errors(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('{\n"seed": }')
    with pytest.raises(ParseError) as info:
        read_config(str(path))
    assert info.value.line == 2
    path.write_text('[1, 2]')
    with pytest.raises(ParseError):
        read_config(str(path))
