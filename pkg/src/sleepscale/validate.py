"""
Validation of power table files before they are turned into a PowerTable.
"""
import logging
logger = logging.getLogger('sleepscale')

from .errors import PowerTableError


CPU_FIELDS = ['name', 'law', 'coefficient']
PLATFORM_FIELDS = ['name', 'watts']
SLEEP_FIELDS = ['label', 'cpu', 'platform', 'latency', 'min_latency', 'max_latency']
POWER_LAWS = {'cubic_in_f', 'quadratic_in_f', 'constant'}


def validate_power_config(data, source):
    """
    Checks every section of a raw power table. Raises PowerTableError on the first problem found.

    Parameters
    ----------
    data : dict
        The decoded JSON document.
    source : str
        Where the document came from, used in error messages.
    """
    if not isinstance(data, dict):
        raise PowerTableError(f'Power table "{source}" is not a JSON object.')

    for section in ['cpu_states', 'platform_states', 'compatibility', 'sleep_states']:
        if section not in data:
            raise PowerTableError(f'Power table "{source}" does not contain the "{section}" section.')

    validate_cpu_states(data['cpu_states'], source)
    validate_platform_states(data['platform_states'], source)
    validate_compatibility(data['compatibility'], data['cpu_states'], data['platform_states'], source)
    validate_sleep_states(data['sleep_states'], data['compatibility'], source)


def _check_fields(rows, fields, section, source):
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or sorted(row) != sorted(fields):
            got = ', '.join(sorted(row)) if isinstance(row, dict) else repr(row)
            raise PowerTableError(f'Entry {i + 1} of the {section} section in power table "{source}" has incorrect '
                                  f'fields: \n'
                                  f'\t[{got}]\n'
                                  f'They should be: \n'
                                  f'\t[{", ".join(fields)}]')


def _check_duplicates(names, section, source):
    seen, duplicates = set(), []
    for name in names:
        if name in seen:
            duplicates.append(name)
        seen.add(name)
    if duplicates:
        raise PowerTableError(f'The {section} section in power table "{source}" contains the following duplicate '
                              f'entries: \n'
                              f'\t[{", ".join(duplicates)}]\n'
                              f'Please remove them.')


def _check_number(value, what, source):
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise PowerTableError(f'{what} in power table "{source}" is not a number: "{value}"')
    if number < 0:
        raise PowerTableError(f'{what} in power table "{source}" is negative: "{value}". It should be >= 0')
    return number


def validate_cpu_states(rows, source):
    _check_fields(rows, CPU_FIELDS, 'cpu_states', source)
    _check_duplicates([row['name'] for row in rows], 'cpu_states', source)

    for row in rows:
        if row['law'] not in POWER_LAWS:
            raise PowerTableError(f'CPU state "{row["name"]}" in power table "{source}" has an invalid power law: '
                                  f'"{row["law"]}". It should be one of [{", ".join(sorted(POWER_LAWS))}]')
        _check_number(row['coefficient'], f'Coefficient of CPU state "{row["name"]}"', source)

    names = {row['name'] for row in rows}
    for required in ['C0_active', 'C0_idle']:
        if required not in names:
            raise PowerTableError(f'Power table "{source}" does not define the "{required}" CPU state.')


def validate_platform_states(rows, source):
    _check_fields(rows, PLATFORM_FIELDS, 'platform_states', source)
    _check_duplicates([row['name'] for row in rows], 'platform_states', source)

    watts = {row['name']: _check_number(row['watts'], f'Power of platform state "{row["name"]}"', source)
             for row in rows}
    for required in ['S0_active', 'S0_idle']:
        if required not in watts:
            raise PowerTableError(f'Power table "{source}" does not define the "{required}" platform state.')

    ordered = [name for name in ['S0_active', 'S0_idle', 'S3'] if name in watts]
    for upper, lower in zip(ordered, ordered[1:]):
        if watts[upper] < watts[lower]:
            raise PowerTableError(f'Platform state "{upper}" in power table "{source}" draws less power than '
                                  f'"{lower}" ({watts[upper]} W < {watts[lower]} W).')


def validate_compatibility(pairs, cpu_rows, platform_rows, source):
    cpu_names = {row['name'] for row in cpu_rows}
    platform_names = {row['name'] for row in platform_rows}

    for pair in pairs:
        if not isinstance(pair, list) or len(pair) != 2:
            raise PowerTableError(f'Compatibility entry {pair!r} in power table "{source}" should be a '
                                  f'[cpu, platform] pair.')
        cpu, platform = pair
        if cpu not in cpu_names:
            raise PowerTableError(f'Compatibility pair {pair} in power table "{source}" references CPU state that '
                                  f'does not exist: "{cpu}"')
        if platform not in platform_names:
            raise PowerTableError(f'Compatibility pair {pair} in power table "{source}" references platform state '
                                  f'that does not exist: "{platform}"')

    _check_duplicates([f'{cpu}/{platform}' for cpu, platform in pairs], 'compatibility', source)
    if ['C0_active', 'S0_active'] not in pairs or ['C0_idle', 'S0_idle'] not in pairs:
        raise PowerTableError(f'Power table "{source}" must list both [C0_active, S0_active] and '
                              f'[C0_idle, S0_idle] as compatible pairs.')


def validate_sleep_states(rows, pairs, source):
    _check_fields(rows, SLEEP_FIELDS, 'sleep_states', source)
    _check_duplicates([row['label'] for row in rows], 'sleep_states', source)

    for row in rows:
        if [row['cpu'], row['platform']] not in pairs:
            raise PowerTableError(f'Sleep state "{row["label"]}" in power table "{source}" combines '
                                  f'{row["cpu"]} with {row["platform"]}, which is not a compatible pair.')
        low = _check_number(row['min_latency'], f'Minimum latency of "{row["label"]}"', source)
        high = _check_number(row['max_latency'], f'Maximum latency of "{row["label"]}"', source)
        _check_number(row['latency'], f'Latency of "{row["label"]}"', source)
        if low > high:
            raise PowerTableError(f'Sleep state "{row["label"]}" in power table "{source}" has a latency range '
                                  f'that is empty: [{low}, {high}]')

    if 'C0iS0i' not in {row['label'] for row in rows}:
        raise PowerTableError(f'Power table "{source}" does not define the "C0iS0i" sleep state.')
