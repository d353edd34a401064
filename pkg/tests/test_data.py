import numpy as np
import pytest

from sleepscale.data import TABLE_ENV_VAR, TABLES_DIR, load_jobs, load_power_table, load_trace, save_jobs, save_trace
from sleepscale.errors import ParseError, PowerTableError
from sleepscale.power import combined_power
from sleepscale.workload import JobStream, UtilizationTrace


def test_default_table(monkeypatch):
    monkeypatch.delenv(TABLE_ENV_VAR, raising=False)
    assert load_power_table().name == 'xeon'


def test_packaged_table_by_name():
    table = load_power_table('xeon_text_idle')
    assert combined_power(table, 'C6', 'S0_idle', 1.0) == pytest.approx(15 + 52.7)


def test_env_var_table(monkeypatch):
    monkeypatch.setenv(TABLE_ENV_VAR, f'{TABLES_DIR}/xeon_text_idle.json')
    assert load_power_table().platform_states['S0_idle'].power == pytest.approx(52.7)


def test_missing_table(tmp_path):
    with pytest.raises(PowerTableError, match='Could not find'):
        load_power_table(str(tmp_path / 'nope.json'))


def test_invalid_json(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"cpu_states": [')
    with pytest.raises(PowerTableError, match='not valid JSON'):
        load_power_table(str(path))


def test_trace_with_header(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text('minute,rho\n0,0.1\n1,0.25\n2,0.5\n')
    trace = load_trace(str(path))
    assert list(trace.minutes) == [0, 1, 2]
    assert np.allclose(trace.rho, [0.1, 0.25, 0.5])


def test_trace_without_header(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text('10,0.3\n11,0.4\n')
    assert list(load_trace(str(path)).minutes) == [10, 11]


def test_trace_bad_number_reports_line(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text('minute,rho\n0,0.1\n1,abc\n')
    with pytest.raises(ParseError) as info:
        load_trace(str(path))
    assert info.value.line == 3
    assert str(info.value).startswith('line 3:')


def test_trace_gap_reports_line(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text('0,0.1\n1,0.2\n3,0.2\n')
    with pytest.raises(ParseError) as info:
        load_trace(str(path))
    assert info.value.line == 3


def test_trace_wrong_columns(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text('0,0.1,5\n')
    with pytest.raises(ParseError):
        load_trace(str(path))


def test_trace_save_load(tmp_path):
    trace = UtilizationTrace.from_values([0.2, 0.4, 0.6], start_minute=5)
    path = str(tmp_path / 'trace.csv')
    save_trace(trace, path)
    assert load_trace(path) == trace


def test_jobs_save_load(tmp_path):
    stream = JobStream([0.5, 1.0, 2.5], [0.1, 0.2, 0.3])
    path = str(tmp_path / 'jobs.csv')
    save_jobs(stream, path)
    loaded = load_jobs(path)
    assert np.array_equal(loaded.arrivals, stream.arrivals)
    assert np.array_equal(loaded.demands, stream.demands)
