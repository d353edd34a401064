"""
Data reading related tasks: power table files, utilization traces and job logs.
"""

import logging
logger = logging.getLogger('sleepscale')

import json
import os

import numpy as np
import pandas as pd

from .errors import ParseError, PowerTableError
from .power import PowerTable
from .validate import validate_power_config
from .workload import JobStream, UtilizationTrace


TABLE_ENV_VAR = 'SLEEPSCALE_POWER_TABLE'
TABLES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'tables')


def default_table_path():
    """
    The power table used when none is given explicitly: the file named by the SLEEPSCALE_POWER_TABLE environment
    variable if it is set, otherwise the packaged Xeon table.
    """
    return os.environ.get(TABLE_ENV_VAR) or os.path.join(TABLES_DIR, 'xeon.json')


def load_power_table(path=None):
    """
    Reads and validates a power table file.

    Parameters
    ----------
    path : str, optional
        File path. A bare name such as "xeon_text_idle" refers to a packaged table.

    Returns
    -------
    PowerTable
    """
    path = path or default_table_path()
    if not os.path.exists(path) and os.path.exists(os.path.join(TABLES_DIR, f'{path}.json')):
        path = os.path.join(TABLES_DIR, f'{path}.json')

    logger.info(f'Reading power table "{path}"')
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except (FileNotFoundError, OSError):
        raise PowerTableError(f'Could not find the power table at "{path}".')
    except json.JSONDecodeError as e:
        raise PowerTableError(f'Power table "{path}" is not valid JSON: {e.msg} (line {e.lineno})')

    validate_power_config(data, path)
    return PowerTable.from_config(data, path)


def _to_float(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return np.nan


def _read_rows(path, columns):
    """
    Reads a two-column numeric CSV with an optional header row. Returns a float DataFrame with the given column
    names; the index of each row is its 1-based line number in the file.
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True, comment='#')
    except (FileNotFoundError, OSError):
        raise ParseError(f'Could not find the file "{path}".')
    except pd.errors.EmptyDataError:
        raise ParseError(f'File "{path}" is empty.')
    except pd.errors.ParserError as e:
        raise ParseError(f'File "{path}" is not a valid CSV file: {e}')

    if raw.shape[1] != len(columns):
        raise ParseError(f'File "{path}" has {raw.shape[1]} columns. It should have {len(columns)}: '
                         f'[{", ".join(columns)}]', line=1)
    raw.columns = columns
    raw.index = np.arange(1, len(raw) + 1)

    first = pd.to_numeric(raw.iloc[0], errors='coerce')
    if first.isna().all():
        raw = raw.iloc[1:]

    values = raw.apply(lambda col: col.map(_to_float))
    bad = values.isna().any(axis=1)
    if bad.any():
        line = int(values.index[bad.argmax()])
        raise ParseError(f'Could not read a number from "{",".join(raw.loc[line].fillna(""))}" in "{path}"',
                         line=line)
    if values.empty:
        raise ParseError(f'File "{path}" contains no records.')
    return values


def load_trace(path):
    """
    Reads a `minute,rho` CSV trace (header optional).

    Returns
    -------
    UtilizationTrace
    """
    logger.info(f'Reading utilization trace "{path}"')
    rows = _read_rows(path, ['minute', 'rho'])

    minutes = rows['minute'].to_numpy()
    if np.any(minutes != np.round(minutes)):
        line = int(rows.index[np.argmax(minutes != np.round(minutes))])
        raise ParseError(f'Minute index in "{path}" is not an integer', line=line)

    steps = np.diff(minutes)
    if np.any(steps != 1):
        line = int(rows.index[int(np.argmax(steps != 1)) + 1])
        raise ParseError(f'Minute indices in "{path}" are not contiguous and increasing', line=line)

    return UtilizationTrace(minutes.astype(np.int64), rows['rho'].to_numpy())


def save_trace(trace, path):
    trace.to_frame().to_csv(path, index=False)


def load_jobs(path, seed=None):
    """
    Reads an `arrival_s,demand_s` CSV job log (header optional).

    Returns
    -------
    JobStream
    """
    logger.info(f'Reading job log "{path}"')
    rows = _read_rows(path, ['arrival_s', 'demand_s'])
    return JobStream(rows['arrival_s'].to_numpy(), rows['demand_s'].to_numpy(), seed)


def save_jobs(stream, path):
    stream.to_frame().to_csv(path, index=False)
