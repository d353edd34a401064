"""
Command-line front end: one subcommand per capability, results on stdout (or --output), diagnostics on stderr.

Exit codes: 0 success, 1 ran but infeasible (select found no feasible policy, run-trace missed its budget), 2 bad
input or a model error.
"""
import logging
logger = logging.getLogger('sleepscale')

import argparse
import json
import math
import sys
import traceback

import numpy as np
import pandas as pd

from .analytic import MM1SleepParams, evaluate
from .data import load_jobs, load_power_table, load_trace
from .errors import ConfigError, SleepScaleError
from .parse import (parse_distribution, parse_frequencies, parse_latencies, parse_policy, parse_sleep,
                    parse_surges, read_config)
from .policy import (DEFAULT_EVAL_JOBS, PolicyGrid, QoSConstraint, SleepTemplate, baseline_budget,
                     default_templates, frontier, frontier_frame, candidates, select)
from .power import active_power, sleep_catalog
from .predict import KINDS as PREDICTOR_KINDS, mean_absolute_error, records_frame, run_series
from .runtime import EpochConfig, compare, parse_strategy, reports_frame, run
from .simulate import result_record, result_row, results_frame, simulate, sweep
from .workload import (WORKLOADS, TracePattern, email_store_trace, generate, rescale_to_utilization, synth_trace,
                       workload_preset)


EXIT_OK, EXIT_INFEASIBLE, EXIT_ERROR = 0, 1, 2


class ConsoleReporter(logging.Handler):
    """
    Logging handler that writes "LEVEL: message [n%]" lines to stderr. The progress percentage comes from
    extra={'progress': n} on the record.
    """

    def emit(self, record):
        """
        Parameters
        ----------
        record : logging.LogRecord
        """
        try:
            msg = f'{record.levelname}: {self.format(record)}'
            progress = getattr(record, 'progress', None)
            if progress is not None:
                msg += f' [{progress}%]'
            sys.stderr.write(msg + '\n')
        except Exception:
            self.handleError(record)


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f'must be at least 1, got {value}')
    return value


def _clean(value):
    """JSON-safe copy: NaN and infinities become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def emit(data, fmt, stream):
    """
    Writes records as CSV or JSON.

    Parameters
    ----------
    data : pd.DataFrame, dict or list of dict
    fmt : str
        "csv" or "json".
    stream : file-like
    """
    if fmt == 'csv':
        if isinstance(data, pd.DataFrame):
            frame = data
        else:
            frame = pd.DataFrame(data if isinstance(data, list) else [data])
        frame.to_csv(stream, index=False, lineterminator='\n')
        return
    if isinstance(data, pd.DataFrame):
        data = data.to_dict(orient='records')
    json.dump(_clean(data), stream, indent=2)
    stream.write('\n')


def _common(parser):
    group = parser.add_argument_group('common options')
    group.add_argument('--power-table', help='power table JSON file or packaged table name '
                                             '(default: $SLEEPSCALE_POWER_TABLE, else the packaged Xeon table)')
    group.add_argument('--config', help='JSON file of option defaults; flags override it')
    group.add_argument('--format', choices=['json', 'csv'], help='output format')
    group.add_argument('-o', '--output', help='write results to this file instead of stdout')
    group.add_argument('--seed', type=int, default=0)
    group.add_argument('--jobs', type=positive_int, default=1, help='worker processes for sweeps')
    group.add_argument('--beta', type=float, default=1.0, help='CPU-bound fraction of each job')
    group.add_argument('--latency', action='append', default=[], metavar='LABEL=SECONDS',
                       help='override a wake-up latency (repeatable)')
    group.add_argument('--strict-latency', action='store_true',
                       help='reject latencies outside the table range instead of warning')
    group.add_argument('-v', '--verbose', action='store_true')
    group.add_argument('--quiet', action='store_true')


def _workload_args(parser, num_jobs=10_000):
    group = parser.add_argument_group('workload')
    group.add_argument('--workload', choices=sorted(WORKLOADS), default='dns', help='workload preset')
    group.add_argument('--family', choices=['exponential', 'lognormal'], default='exponential',
                       help='distribution family for the preset')
    group.add_argument('--rho', type=float, help='utilization (preset arrival rate is derived from it)')
    group.add_argument('--arrivals', help='inter-arrival distribution: exp:RATE, lognormal:MEAN:CV, values:A,B,..')
    group.add_argument('--service', help='service demand distribution, same forms as --arrivals')
    group.add_argument('--jobs-log', help='arrival_s,demand_s CSV job log to use instead of generated jobs')
    group.add_argument('-n', '--num-jobs', type=positive_int, default=num_jobs)


def _grid_args(parser, sleep_options='all', step=0.01):
    group = parser.add_argument_group('policy grid')
    group.add_argument('--frequencies', help='"0.3,0.5,1" or START:STOP:STEP (default: derived from utilization)')
    group.add_argument('--step', type=float, default=step, help='frequency step of the derived grid')
    group.add_argument('--sleep-options', choices=['singletons', 'delayed', 'all', 'none'], default=sleep_options)


def _qos_args(parser):
    group = parser.add_argument_group('QoS')
    group.add_argument('--mode', choices=['mean', 'tail'], default='mean')
    group.add_argument('--rho-b', type=float, default=0.8, help='design utilization of the baseline')
    group.add_argument('--budget', type=float, help='normalized mean response budget (default 1/(1-rho_b))')
    group.add_argument('--deadline', type=float, help='tail mode deadline, seconds (default: baseline p95)')
    group.add_argument('--max-violation', type=float, default=0.05)


def _trace_args(parser):
    group = parser.add_argument_group('trace')
    group.add_argument('--trace', help='minute,rho CSV trace (default: synthetic email-store day)')
    group.add_argument('--minutes', type=positive_int, default=1080, help='length of the synthetic trace')


def _epoch_args(parser):
    group = parser.add_argument_group('epochs')
    group.add_argument('--T', type=positive_int, default=5, help='epoch length, minutes')
    group.add_argument('--alpha', type=float, default=0.35, help='over-provisioning factor')
    group.add_argument('--predictor', choices=PREDICTOR_KINDS, default='lms_cusum')
    group.add_argument('--hist', type=positive_int, default=10, help='predictor history depth')
    group.add_argument('--log-source', choices=['log', 'synthetic'], default='log')
    group.add_argument('--horizon', choices=['first_minute', 'epoch_mean'], default='first_minute')
    group.add_argument('--eval-jobs', type=positive_int, default=DEFAULT_EVAL_JOBS,
                       help='jobs per candidate evaluation')


def build_parser():
    parser = argparse.ArgumentParser(prog='sleepscale', description='Joint frequency and sleep-state policy '
                                     'simulation and selection for a single server.')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('simulate', help='simulate one policy')
    p.add_argument('--policy', required=True, help='F/SLEEP, e.g. 0.42/C6S3 or 1/C0iS0i>C6S3@10')
    p.add_argument('--warmup', type=int, default=0, help='leading jobs left out of response statistics')
    p.add_argument('--wakeup-model', choices=['deterministic', 'exponential'], default='deterministic')
    p.add_argument('--deadline', type=float, help='report the fraction of jobs at or past this response time')
    _workload_args(p)
    _common(p)
    p.set_defaults(format='json')

    p = commands.add_parser('sweep', help='simulate every policy of a grid')
    _grid_args(p)
    _workload_args(p)
    _common(p)
    p.set_defaults(format='csv')

    p = commands.add_parser('frontier', help='power-performance curves, one per sleep option')
    p.add_argument('--curve', help='prefix for the curve column')
    _grid_args(p, sleep_options='singletons')
    _workload_args(p)
    _common(p)
    p.set_defaults(format='csv')

    p = commands.add_parser('analyze', help='closed-form values for Poisson arrivals and exponential service')
    p.add_argument('--lam', type=float, required=True, help='arrival rate, jobs/s')
    p.add_argument('--mu', type=float, required=True, help='full-speed service rate, jobs/s')
    p.add_argument('-f', type=float, default=1.0, help='frequency factor')
    p.add_argument('--sleep', default='none', help='sleep sequence, e.g. C6S3 or C0iS0i>C6S3@10')
    p.add_argument('--d', type=float, help='deadline for Pr(R >= d), seconds')
    p.add_argument('--pre-idle', choices=['formula', 'idle'], default='formula',
                   help='charge pre-sleep idle at P0 (formula) or at C0_idle/S0_idle power')
    _common(p)
    p.set_defaults(format='json')

    p = commands.add_parser('select', help='pick the lowest-power policy meeting the QoS constraint')
    _grid_args(p)
    _qos_args(p)
    _workload_args(p)
    _common(p)
    p.set_defaults(format='json')

    p = commands.add_parser('run-trace', help='run the epoch loop over a utilization trace')
    p.add_argument('--strategy', default='SS', help='SS, SS:<state>, DVFS or R2H:<state>')
    _trace_args(p)
    _epoch_args(p)
    _grid_args(p, sleep_options='singletons', step=0.02)
    _qos_args(p)
    _workload_args(p)
    _common(p)
    p.set_defaults(format='csv')

    p = commands.add_parser('compare', help='run several strategies on the same jobs')
    p.add_argument('--strategies', default='SS,SS:C3,DVFS,R2H:C3,R2H:C6', help='comma-separated strategies')
    _trace_args(p)
    _epoch_args(p)
    _grid_args(p, sleep_options='singletons', step=0.02)
    _qos_args(p)
    _workload_args(p)
    _common(p)
    p.set_defaults(format='json')

    p = commands.add_parser('predict-eval', help='run utilization predictors over a trace')
    p.add_argument('--predictor', default='lms_cusum', help='comma-separated predictor kinds')
    p.add_argument('--hist', type=positive_int, default=10)
    p.add_argument('--lms-step', type=float, default=0.5)
    p.add_argument('--retain-weights', action='store_true')
    p.add_argument('--warmup', type=int, default=0, help='minutes left out of the error summary')
    p.add_argument('--summary', action='store_true', help='print only the mean absolute error per predictor')
    _trace_args(p)
    _common(p)
    p.set_defaults(format='csv')

    p = commands.add_parser('synth-trace', help='write a synthetic utilization trace')
    p.add_argument('--minutes', type=positive_int, default=1440)
    p.add_argument('--email-store', action='store_true', help='email-store-like day (ignores the shape flags)')
    p.add_argument('--low', type=float, default=0.1)
    p.add_argument('--high', type=float, default=0.9)
    p.add_argument('--period', type=float, default=1440.0, help='minutes')
    p.add_argument('--phase', type=float, default=0.0, help='minutes')
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--surges', help='START:DURATION:LEVEL,...')
    _common(p)
    p.set_defaults(format='csv')

    p = commands.add_parser('catalog', help='print the sleep states of the power table')
    p.add_argument('-f', type=float, default=1.0, help='frequency the idle powers are evaluated at')
    _common(p)
    p.set_defaults(format='csv')

    return parser


class Runner:
    """
    Parses arguments, installs the console reporter, runs one subcommand and maps what happened to an exit code.
    """

    def __init__(self, stdout=None):
        self.stdout = stdout
        self.reporter = ConsoleReporter()

    def run(self, argv=None):
        """
        Parameters
        ----------
        argv : list of str, optional
            Arguments without the program name; defaults to sys.argv[1:].

        Returns
        -------
        int
            Exit code.
        """
        argv = list(sys.argv[1:] if argv is None else argv)
        parser = build_parser()
        try:
            args = self.parse(parser, argv)
        except SystemExit as e:
            return e.code if isinstance(e.code, int) else EXIT_ERROR

        logger.addHandler(self.reporter)
        logger.setLevel(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
        try:
            return self.dispatch(args)
        except SleepScaleError as e:
            logger.error(str(e))
            return EXIT_ERROR
        except Exception:
            tb = traceback.format_exc()
            logger.error(f'An unexpected error has occurred: \n\n{tb}')
            return EXIT_ERROR
        finally:
            logger.removeHandler(self.reporter)

    def parse(self, parser, argv):
        """Flags override --config values, which override the built-in defaults."""
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument('--config')
        known, _ = pre.parse_known_args(argv)
        if known.config:
            try:
                defaults = read_config(known.config)
            except SleepScaleError as e:
                parser.error(str(e))
            for sub in parser._subparsers._group_actions[0].choices.values():
                dests = {action.dest for action in sub._actions}
                sub.set_defaults(**{k: v for k, v in defaults.items() if k in dests})
        return parser.parse_args(argv)

    def dispatch(self, args):
        handler = getattr(self, 'cmd_' + args.command.replace('-', '_'))
        if args.output:
            with open(args.output, 'w', newline='') as out:
                return handler(args, out)
        return handler(args, self.stdout or sys.stdout)

    # shared pieces

    def table(self, args):
        return load_power_table(args.power_table)

    def workload(self, args):
        """
        Returns
        -------
        arrivals : ArrivalSpec
        service : ServiceSpec
        """
        if args.arrivals or args.service:
            if not (args.arrivals and args.service):
                raise ConfigError('--arrivals and --service must be given together: only one of them was set.')
            return (parse_distribution(args.arrivals),
                    parse_distribution(args.service, service=True, beta=args.beta))
        return workload_preset(args.workload).specs(args.rho, args.family, args.beta)

    def stream(self, args, arrivals, service):
        """The evaluation stream and the service rate responses are normalised by."""
        if args.jobs_log:
            stream = load_jobs(args.jobs_log, args.seed)
            if args.rho is not None:
                stream = rescale_to_utilization(stream, args.rho)
            return stream, None
        return generate(arrivals, service, args.num_jobs, args.seed), service.mu

    def grid(self, args, table):
        if args.sleep_options == 'singletons':
            options = [SleepTemplate.immediate(label) for label in table.labels]
        elif args.sleep_options == 'delayed':
            options = default_templates(table.labels, cascade=False)
        elif args.sleep_options == 'none':
            options = [SleepTemplate.none()]
        else:
            options = None
        return PolicyGrid(frequencies=tuple(parse_frequencies(args.frequencies)) if args.frequencies else None,
                          sleep_options=tuple(options) if options is not None else None, beta=args.beta,
                          step=args.step, latencies=parse_latencies(args.latency),
                          strict_latency=args.strict_latency)

    def qos(self, args, mu, table):
        if args.mode == 'tail' and args.deadline is None:
            return baseline_budget(args.rho_b, mu, 'tail', table, seed=args.seed)
        if args.mode == 'tail':
            return QoSConstraint('tail', deadline=args.deadline, max_violation=args.max_violation,
                                 rho_b=args.rho_b, mu=mu)
        qos = baseline_budget(args.rho_b, mu)
        if args.budget is not None:
            qos = QoSConstraint('mean', budget=args.budget, rho_b=args.rho_b, mu=mu)
        return qos

    def trace(self, args):
        if args.trace:
            return load_trace(args.trace)
        return email_store_trace(args.minutes, seed=args.seed)

    def epoch_config(self, args, qos, grid, jobs=None):
        return EpochConfig(T=args.T, alpha=args.alpha, predictor=args.predictor,
                           predictor_params={'hist': args.hist}, qos=qos, grid=grid, eval_jobs=args.eval_jobs,
                           log_source=args.log_source, horizon=args.horizon,
                           jobs=args.jobs if jobs is None else jobs)

    # subcommands

    def cmd_simulate(self, args, out):
        table = self.table(args)
        policy = parse_policy(args.policy, table, parse_latencies(args.latency), args.strict_latency)
        arrivals, service = self.workload(args)
        stream, mu = self.stream(args, arrivals, service)

        logger.info(f'Simulating {policy.label} over {len(stream)} jobs', extra={'progress': 0})
        result = simulate(policy, stream, table, beta=args.beta, mu=mu, warmup=args.warmup, deadline=args.deadline,
                          wakeup_model=args.wakeup_model, seed=args.seed)
        logger.info('Done', extra={'progress': 100})
        record = result_record(policy, result) if args.format == 'json' else result_row(policy, result)
        emit(record, args.format, out)
        return EXIT_OK

    def cmd_sweep(self, args, out):
        table = self.table(args)
        arrivals, service = self.workload(args)
        stream, mu = self.stream(args, arrivals, service)
        policies = candidates(self.grid(args, table), stream, table)

        entries = sweep(policies, stream, table, beta=args.beta, jobs=args.jobs, mu=mu)
        for e in entries:
            if not e.ok:
                logger.warning(f'{e.policy.label} failed: {e.error}')
        if args.format == 'csv':
            emit(results_frame(entries), 'csv', out)
        else:
            emit([result_record(e.policy, e.result) for e in entries if e.ok], 'json', out)
        return EXIT_OK

    def cmd_frontier(self, args, out):
        table = self.table(args)
        arrivals, service = self.workload(args)
        stream, mu = self.stream(args, arrivals, service)

        points = frontier(self.grid(args, table), stream, table, jobs=args.jobs, mu=mu)
        emit(frontier_frame(points, args.curve), args.format, out)
        return EXIT_OK

    def cmd_analyze(self, args, out):
        table = self.table(args)
        catalog = sleep_catalog(table, parse_latencies(args.latency), f_idle=args.f, strict=args.strict_latency)
        pre_idle = None
        if args.pre_idle == 'idle':
            pre_idle = catalog['C0iS0i'].power if 'C0iS0i' in catalog else None
        params = MM1SleepParams(args.lam, args.mu, args.f, parse_sleep(args.sleep, catalog),
                                active_power(table, args.f), args.beta, pre_idle)
        record = {'lam': args.lam, 'mu': args.mu, 'f': args.f, 'sleep_label': params.states.label}
        record.update(evaluate(params, args.d))
        emit(record, args.format, out)
        return EXIT_OK

    def cmd_select(self, args, out):
        table = self.table(args)
        arrivals, service = self.workload(args)
        stream, mu = self.stream(args, arrivals, service)
        qos = self.qos(args, mu if mu else 1.0 / stream.mean_demand, table)

        choice = select(self.grid(args, table), stream, table, qos, jobs=args.jobs)
        record = {'f': choice.policy.f, 'sleep_label': choice.policy.sleep_label, 'family': choice.policy.family,
                  'feasible': choice.feasible, 'margin': choice.margin, 'evaluated': choice.evaluated}
        record.update(choice.predicted.to_dict())
        emit(record, args.format, out)
        return EXIT_OK if choice.feasible else EXIT_INFEASIBLE

    def cmd_run_trace(self, args, out):
        table = self.table(args)
        arrivals, service = self.workload(args)
        trace = self.trace(args)
        cfg = self.epoch_config(args, self.qos(args, service.mu, table), self.grid(args, table))

        reports, summary = run(trace, (arrivals, service), cfg, parse_strategy(args.strategy), args.seed, table)
        if args.format == 'csv':
            emit(reports_frame(reports), 'csv', out)
        else:
            emit({'summary': summary.to_dict(), 'epochs': [r.to_row() for r in reports]}, 'json', out)
        if not summary.meets_budget:
            logger.warning(f'{summary.strategy} missed its response budget: mu*E[R]={summary.normalized_response:.3f}')
            return EXIT_INFEASIBLE
        return EXIT_OK

    def cmd_compare(self, args, out):
        strategies = [parse_strategy(s) for s in args.strategies.split(',') if s.strip()]
        table = self.table(args)
        arrivals, service = self.workload(args)
        trace = self.trace(args)
        # strategies run in parallel; candidates within one run stay serial
        cfg = self.epoch_config(args, self.qos(args, service.mu, table), self.grid(args, table),
                                jobs=1 if args.jobs > 1 else None)

        report = compare(trace, (arrivals, service), cfg, strategies, args.seed, table, jobs=args.jobs)
        emit(report.to_frame() if args.format == 'csv' else report.to_dict(), args.format, out)
        return EXIT_ERROR if report.errors else EXIT_OK

    def cmd_predict_eval(self, args, out):
        kinds = [k.strip() for k in args.predictor.split(',') if k.strip()]
        trace = self.trace(args)
        params = {'hist': args.hist, 'step': args.lms_step, 'retain_weights': args.retain_weights}

        results = {kind: run_series(kind, trace, **params) for kind in kinds}
        summaries = [{'kind': kind, 'mae': mean_absolute_error(records, args.warmup)}
                     for kind, records in results.items()]
        for s in summaries:
            logger.info(f'{s["kind"]}: mean absolute error {s["mae"]:.5f}')

        if args.summary:
            emit(summaries, args.format, out)
        elif args.format == 'csv':
            frames = []
            for kind, records in results.items():
                frame = records_frame(records)
                if len(kinds) > 1:
                    frame.insert(0, 'kind', kind)
                frames.append(frame)
            emit(pd.concat(frames, ignore_index=True), 'csv', out)
        else:
            emit({'predictors': [dict(s, records=records_frame(results[s['kind']]).to_dict(orient='records'))
                                 for s in summaries]}, 'json', out)
        return EXIT_OK

    def cmd_synth_trace(self, args, out):
        if args.email_store:
            trace = email_store_trace(args.minutes, seed=args.seed)
        else:
            trace = synth_trace(TracePattern(minutes=args.minutes, low=args.low, high=args.high, period=args.period,
                                             phase=args.phase, noise=args.noise, surges=parse_surges(args.surges),
                                             seed=args.seed))
        emit(trace.to_frame(), args.format, out)
        return EXIT_OK

    def cmd_catalog(self, args, out):
        table = self.table(args)
        catalog = sleep_catalog(table, parse_latencies(args.latency), f_idle=args.f, strict=args.strict_latency)
        rows = []
        for label, state in catalog.items():
            low, high = table.latency_bounds[label]
            rows.append({'label': label, 'cpu': state.cpu, 'platform': state.platform, 'power_W': state.power,
                         'latency_s': state.wakeup_latency, 'min_latency_s': low, 'max_latency_s': high})
        emit(rows, args.format, out)
        return EXIT_OK


def main(argv=None):
    return Runner().run(argv)
