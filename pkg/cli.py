"""
Command-line driver for steerlab.

Every command turns its arguments into a RunConfig, runs it, and writes a
JSON (or CSV) report that embeds the RunConfig, so a report can be replayed
with --config or, when a ledger is configured, with `rerun ID`.

Exit codes: 0 success, 1 unexpected error, 2 invalid input, 3 enumeration cap.
"""

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

import channels
import config
import criteria
import database
import measurements
import qmat
import states
import thresholds
from models import RunConfig, SteeringError, InvalidArgumentError, EnumerationCapError, matrix_to_dict

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_CAP = 3

SWEEP_COLUMNS = ['parameter', 'F_bar', 'f_minus', 'f_plus', 'verdict', 'criterion', 'stderr', 'ep_verdict']
DEFAULT_TWIRL_SAMPLES = 10_000
DEFAULT_MC_SAMPLES = 100_000
DEFAULT_SWEEP_SAMPLES = 4


# --- Building inputs from a RunConfig ---

def _dimension(value) -> int:
    """Integer dimension from a flag or config value; 2.5 is rejected rather than truncated."""
    d = float(value)
    if not d.is_integer() or d < 2:
        raise InvalidArgumentError(f"Dimension must be an integer >= 2, got {value}")
    return int(d)


def build_measurement(entry):
    """MeasurementSet (or "continuous") described by a measurement entry"""
    kind = entry.get('kind', 'continuous')
    d = _dimension(entry.get('d', 2))
    weights = entry.get('weights')
    if kind == 'continuous':
        return criteria.CONTINUOUS
    if kind == 'mub-pair':
        ms = measurements.mub_pair(d)
    elif kind == 'identical-pair':
        ms = measurements.identical_pair(d)
    elif kind == 'haar':
        ms = measurements.haar_measurement_set(d, int(entry['settings']), entry.get('seed', 0))
    elif kind == 'bloch':
        return measurements.bloch_measurement_set(entry['directions'], weights)
    else:
        raise SteeringError(f"Unknown measurement kind {kind!r}")
    if weights is not None:
        ms = measurements.measurement_set(ms.bases, weights)
    return ms


def build_state(entry):
    kind = entry.get('kind')
    if kind == 'werner':
        return states.werner_state(_dimension(entry['d']), float(entry['w']))
    if kind == 'isotropic':
        return states.isotropic_state(_dimension(entry['d']), float(entry['eta']))
    if kind == 'tstate':
        return states.t_state(entry['t'])
    if kind == 'two-qubit-random':
        return states.random_bipartite_state(2, int(entry['seed']))
    raise SteeringError(f"Unknown state kind {kind!r}")


def build_channel(entry):
    kind = entry.get('kind')
    if kind == 'depolarizing':
        return channels.depolarizing_channel(_dimension(entry['d']), float(entry['eta']))
    if kind == 'amplitude-damping':
        return channels.amplitude_damping_channel(float(entry['gamma']))
    return None


# --- Commands ---

def run_nst(cfg: RunConfig) -> dict:
    """Nonsteering thresholds for Bob's measurements"""
    entry = cfg.measurement
    d = _dimension(entry.get('d', 2))
    samples = cfg.mc.get('samples')
    bob = build_measurement(entry)
    if bob == criteria.CONTINUOUS:
        if samples:
            nst = thresholds.continuous_threshold_mc(d, int(samples), cfg.seed)
        else:
            nst = thresholds.continuous_nst(d)
        return {'nst': nst.to_dict()}

    nst = thresholds.nst_enumerate(bob)
    result = {'nst': nst.to_dict()}
    if bob.settings == 2:
        f_plus, f_minus = thresholds.two_setting_closed_form(bob)
        result['closed_form'] = {'f_plus': f_plus, 'f_minus': f_minus}
    if bob.dim == 2:
        g_plus, g_minus, r_opt = thresholds.geometric_nst(bob)
        result['geometric'] = {'g_plus': g_plus, 'g_minus': g_minus, 'r_opt': r_opt}
    trials = cfg.options.get('check_probabilistic')
    if trials:
        result['probabilistic_check'] = thresholds.nst_probabilistic_check(bob, int(trials), cfg.seed, nst)
    return result


def run_steer(cfg: RunConfig) -> dict:
    """One criterion report for a state"""
    w = build_state(cfg.state)
    resolution = int(cfg.quadrature.get('resolution', criteria.DEFAULT_RESOLUTION))
    kind = cfg.state.get('kind')
    if kind == 'tstate':
        report = criteria.t_state_criterion(cfg.state['t'], resolution)
    elif kind == 'two-qubit-random':
        report = criteria.general_two_qubit_criterion(w, resolution)
    else:
        entry = dict(cfg.measurement)
        entry.setdefault('d', cfg.state['d'])
        bob = build_measurement(entry)
        samples = cfg.mc.get('samples') or criteria.DEFAULT_CONTINUOUS_SAMPLES
        report = criteria.evaluate_lsi(w, None, bob, criterion=cfg.options.get('criterion', 'auto'),
                                       samples=int(samples), seed=cfg.seed)
    return {'report': report.to_dict(), 'state': {'kind': w.kind, 'dim': w.dim, 'params': w.params}}


def _sweep_grid(cfg: RunConfig, d: int):
    family = cfg.options['family']
    start = cfg.options.get('start')
    if start is None:
        start = 1.0 / d**2 if family == 'depolarizing' else 0.0
    stop = cfg.options.get('stop')
    stop = 1.0 if stop is None else stop
    return np.linspace(float(start), float(stop), int(cfg.options.get('points', 101)))


def run_sweep(cfg: RunConfig) -> dict:
    """
    Verdicts along a one-parameter family: Werner w, isotropic eta, or the
    entanglement fidelity f of a depolarizing channel.
    """
    family = cfg.options.get('family')
    d = _dimension(cfg.state.get('d', 2))
    criterion = cfg.options.get('criterion', 'auto')
    samples = int(cfg.mc.get('samples') or DEFAULT_SWEEP_SAMPLES)
    rows = []
    for value in _sweep_grid(cfg, d):
        value = float(value)
        if family in ('werner', 'isotropic'):
            w = states.werner_state(d, value) if family == 'werner' else states.isotropic_state(d, value)
            report = criteria.evaluate_lsi(w, None, criteria.CONTINUOUS, criterion=criterion,
                                           samples=samples, seed=cfg.seed)
            ep_verdict = ''
        elif family == 'depolarizing':
            eta = channels.isotropic_eta_from_fidelity(value, d)
            report = criteria.entanglement_fidelity_criterion(channels.depolarizing_channel(d, eta), d)
            ep_verdict = 'entanglement-preserving' if report.details['entanglement_preserving'] else 'entanglement-breaking'
        else:
            raise SteeringError(f"Unknown sweep family {family!r}")
        rows.append({
            'parameter': value,
            'F_bar': report.averaged_fidelity,
            'f_minus': report.thresholds[0],
            'f_plus': report.thresholds[1],
            'verdict': report.verdict,
            'criterion': report.kind,
            'stderr': float(report.details.get('stderr', 0.0)),
            'ep_verdict': ep_verdict,
        })
    logging.info(f"Swept {family} d={d} over {len(rows)} points")
    return {'family': family, 'd': d, 'columns': SWEEP_COLUMNS, 'rows': rows}


def run_channel(cfg: RunConfig) -> dict:
    """decompose / fidelity / twirl on a channel or a bipartite state"""
    action = cfg.options.get('action')
    channel = build_channel(cfg.state)
    w = channels.choi_state(channel) if channel is not None else build_state(cfg.state)

    if action == 'decompose':
        sqrt_rho_a, kraus_channel = channels.decompose_state(w)
        rebuilt = channels.reconstruct_state(sqrt_rho_a, kraus_channel)
        return {
            'sqrt_rho_A': matrix_to_dict(sqrt_rho_a),
            'channel': kraus_channel.to_dict(),
            'kraus_count': len(kraus_channel.kraus),
            'reconstruction_error': float(np.linalg.norm(rebuilt - w.matrix)),
        }
    if action == 'fidelity':
        if channel is None:
            _, channel = channels.decompose_state(w)
        report = criteria.entanglement_fidelity_criterion(channel)
        return {
            'entanglement_fidelity': channels.entanglement_fidelity(channel),
            'entanglement_fidelity_direct': channels.entanglement_fidelity_direct(channel),
            'report': report.to_dict(),
        }
    if action == 'twirl':
        samples = int(cfg.mc.get('samples') or DEFAULT_TWIRL_SAMPLES)
        twirled = channels.twirl(w, samples, cfg.seed)
        target = channels.isotropic_projection(w)
        return {
            'twirled': twirled.to_dict(),
            'target_eta': target.params['eta'],
            'trace_distance_to_isotropic': qmat.trace_distance(twirled.matrix, target.matrix),
            'fidelity_before': _psi_plus_overlap(w.matrix),
            'fidelity_after': _psi_plus_overlap(twirled.matrix),
        }
    raise SteeringError(f"Unknown channel action {action!r}")


def run_mc_verify(cfg: RunConfig) -> dict:
    """Monte Carlo continuous thresholds against the closed forms"""
    d = _dimension(cfg.measurement.get('d', 2))
    samples = int(cfg.mc.get('samples') or DEFAULT_MC_SAMPLES)
    nst = thresholds.continuous_threshold_mc(d, samples, cfg.seed)
    f_plus, f_minus = thresholds.continuous_thresholds(d)
    result = {
        'mc': nst.to_dict(),
        'analytic': {'f_plus': f_plus, 'f_minus': f_minus},
        'plus_within_3_stderr': bool(abs(nst.f_plus - f_plus) <= 3 * nst.details['stderr_plus']),
        'minus_within_3_stderr': bool(abs(nst.f_minus - f_minus) <= 3 * nst.details['stderr_minus']),
    }
    if d == 2:
        result['northern_hemisphere_expected'] = 0.375
    return result


def _psi_plus_overlap(m) -> float:
    d = int(round(np.sqrt(m.shape[0])))
    psi = qmat.maximally_entangled_vector(d)
    return float(np.real(psi.conj() @ m @ psi))


COMMANDS = {
    'nst': run_nst,
    'steer': run_steer,
    'sweep': run_sweep,
    'channel': run_channel,
    'mc-verify': run_mc_verify,
}


# --- Rendering ---

def render(cfg: RunConfig, result: dict) -> str:
    """Report text; identical configs give byte-identical output."""
    fmt = cfg.output.get('format', 'json')
    if fmt == 'json':
        report = {'command': cfg.command, 'config': cfg.to_dict(), 'result': result}
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    if fmt == 'csv':
        buffer = io.StringIO()
        if 'rows' in result:
            writer = csv.DictWriter(buffer, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in result['rows']:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        else:
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(['field', 'value'])
            for key, value in _flatten(result):
                writer.writerow([key, value])
        return buffer.getvalue()
    raise SteeringError(f"Unknown output format {fmt!r}")


def _flatten(value, name=""):
    """(dotted.name, scalar) pairs; list items are addressed as name[i]"""
    if isinstance(value, dict):
        for key in sorted(value):
            yield from _flatten(value[key], f"{name}.{key}" if name else str(key))
    elif isinstance(value, (list, tuple)):
        if not value:
            yield name, ""
        for index, item in enumerate(value):
            yield from _flatten(item, f"{name}[{index}]")
    else:
        yield name, (repr(value) if isinstance(value, float) else value)


def execute(cfg: RunConfig) -> str:
    handler = COMMANDS.get(cfg.command)
    if handler is None:
        raise SteeringError(f"Unknown command {cfg.command!r}")
    logging.info(f"Running {cfg.command} (seed {cfg.seed})")
    return render(cfg, handler(cfg))


def write_output(cfg: RunConfig, text: str):
    path = cfg.output.get('path')
    if path:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        logging.info(f"Report written to {path}")
    else:
        sys.stdout.write(text)


# --- Argument parsing ---

def _vector(text):
    try:
        values = [float(x) for x in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three components, got {text!r}")
    return values


def _common_flags():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--seed', type=int, default=0, help='RNG seed (recorded in the report)')
    parent.add_argument('--samples', type=int, default=None, help='Monte Carlo sample count')
    parent.add_argument('--quad', type=int, default=criteria.DEFAULT_RESOLUTION,
                        help='Gauss-Legendre nodes in cos(theta) for sphere integrals')
    parent.add_argument('--out', default=None, help='write the report here instead of stdout')
    parent.add_argument('--format', choices=['json', 'csv'], default='json')
    return parent


def _measurement_flags(parser, include_bloch=True):
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--mub-pair', action='store_true', help='computational + Fourier bases')
    group.add_argument('--identical-pair', action='store_true')
    group.add_argument('--haar', type=int, metavar='N', help='N Haar-random settings')
    group.add_argument('--continuous', action='store_true', help="Bob's Haar-continuous settings")
    if include_bloch:
        group.add_argument('--bloch', type=_vector, nargs='+', metavar='X,Y,Z', help='qubit directions')
    parser.add_argument('--weights', type=float, nargs='+', default=None)


def _state_flags(parser, required=True):
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument('--werner', type=float, nargs=2, metavar=('D', 'W'))
    group.add_argument('--isotropic', type=float, nargs=2, metavar=('D', 'ETA'))
    group.add_argument('--tstate', type=float, nargs=3, metavar=('T1', 'T2', 'T3'))
    group.add_argument('--two-qubit-random', type=int, metavar='SEED')
    return group


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='steerlab', description='Linear steering inequalities toolkit')
    parser.add_argument('--config', default=None, help='replay the RunConfig stored in a report or config file')
    parser.add_argument('--ledger', default=None, help='sqlite run ledger (overrides STEERLAB_LEDGER)')
    common = _common_flags()
    sub = parser.add_subparsers(dest='command')

    nst = sub.add_parser('nst', parents=[common], help='nonsteering thresholds')
    _measurement_flags(nst)
    nst.add_argument('-d', type=int, default=2)
    nst.add_argument('--check-probabilistic', type=int, default=None, metavar='TRIALS')

    steer = sub.add_parser('steer', parents=[common], help='evaluate a steering criterion')
    _state_flags(steer)
    _measurement_flags(steer, include_bloch=False)
    steer.add_argument('--criterion', choices=['auto', 'wjd', 'werner'], default='auto')

    sweep = sub.add_parser('sweep', parents=[common], help='verdicts along a state family')
    sweep.add_argument('--family', choices=['werner', 'isotropic', 'depolarizing'], required=True)
    sweep.add_argument('-d', type=int, default=2)
    sweep.add_argument('--points', type=int, default=101)
    sweep.add_argument('--start', type=float, default=None)
    sweep.add_argument('--stop', type=float, default=None)
    sweep.add_argument('--criterion', choices=['auto', 'wjd', 'werner'], default='auto')

    chan = sub.add_parser('channel', parents=[common], help='channel decomposition, fidelity and twirling')
    chan.add_argument('action', choices=['decompose', 'fidelity', 'twirl'])
    group = _state_flags(chan, required=False)
    group.add_argument('--depolarizing', type=float, nargs=2, metavar=('D', 'ETA'))
    group.add_argument('--amplitude-damping', type=float, metavar='GAMMA')

    mc = sub.add_parser('mc-verify', parents=[common], help='Monte Carlo check of the continuous thresholds')
    mc.add_argument('-d', type=int, default=2)

    history = sub.add_parser('history', help='list recorded runs')
    history.add_argument('--limit', type=int, default=20)

    rerun = sub.add_parser('rerun', help='replay a recorded run and compare reports')
    rerun.add_argument('run_id', type=int)
    return parser


def _measurement_entry(args, d):
    entry = {'d': d}
    if getattr(args, 'mub_pair', False):
        entry['kind'] = 'mub-pair'
    elif getattr(args, 'identical_pair', False):
        entry['kind'] = 'identical-pair'
    elif getattr(args, 'haar', None):
        entry.update({'kind': 'haar', 'settings': args.haar, 'seed': args.seed})
    elif getattr(args, 'bloch', None):
        entry.update({'kind': 'bloch', 'directions': args.bloch})
        entry['d'] = 2
    else:
        entry['kind'] = 'continuous'
    if getattr(args, 'weights', None):
        entry['weights'] = args.weights
    return entry


def _state_entry(args):
    if getattr(args, 'werner', None):
        return {'kind': 'werner', 'd': _dimension(args.werner[0]), 'w': args.werner[1]}
    if getattr(args, 'isotropic', None):
        return {'kind': 'isotropic', 'd': _dimension(args.isotropic[0]), 'eta': args.isotropic[1]}
    if getattr(args, 'tstate', None):
        return {'kind': 'tstate', 't': list(args.tstate)}
    if getattr(args, 'two_qubit_random', None) is not None:
        return {'kind': 'two-qubit-random', 'seed': args.two_qubit_random}
    if getattr(args, 'depolarizing', None):
        return {'kind': 'depolarizing', 'd': _dimension(args.depolarizing[0]), 'eta': args.depolarizing[1]}
    if getattr(args, 'amplitude_damping', None) is not None:
        return {'kind': 'amplitude-damping', 'gamma': args.amplitude_damping}
    return {}


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    cfg.mc = {'samples': args.samples, 'seed': args.seed}
    cfg.quadrature = {'resolution': args.quad}
    cfg.output = {'path': args.out, 'format': args.format}
    cfg.state = _state_entry(args)

    if args.command in ('nst', 'mc-verify'):
        cfg.measurement = _measurement_entry(args, args.d)
        if args.command == 'nst':
            cfg.options = {'check_probabilistic': args.check_probabilistic}
    elif args.command == 'steer':
        d = cfg.state.get('d', 2)
        cfg.measurement = _measurement_entry(args, d)
        cfg.options = {'criterion': args.criterion}
    elif args.command == 'sweep':
        cfg.state = {'d': args.d}
        cfg.options = {'family': args.family, 'points': args.points, 'start': args.start,
                       'stop': args.stop, 'criterion': args.criterion}
    elif args.command == 'channel':
        if not cfg.state:
            raise SteeringError("channel needs a source: --depolarizing, --amplitude-damping or a state flag")
        cfg.options = {'action': args.action}
    return cfg


def load_config(path) -> RunConfig:
    """Read a RunConfig from a report file (its "config" entry) or a bare config file"""
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    if 'config' in data and isinstance(data['config'], dict):
        data = data['config']
    return RunConfig.from_dict(data)


def route_command(args) -> int:
    """Dispatch a parsed command line; returns the process exit code."""
    ledger = args.ledger or config.ledger_path()

    if args.command == 'history':
        if not ledger:
            raise SteeringError("history needs a ledger: set STEERLAB_LEDGER or pass --ledger")
        runs = [run.to_dict() for run in database.list_runs(ledger, args.limit)]
        sys.stdout.write(json.dumps(runs, indent=2) + "\n")
        return EXIT_OK

    if args.command == 'rerun':
        if not ledger:
            raise SteeringError("rerun needs a ledger: set STEERLAB_LEDGER or pass --ledger")
        record = database.get_run(ledger, args.run_id)
        if record is None:
            raise SteeringError(f"No recorded run with id {args.run_id}")
        text = execute(RunConfig.from_dict(record.get_config_dict()))
        identical = text == record.report_json
        if not identical:
            logging.warning(f"Run {args.run_id} did not reproduce byte-identically")
        sys.stdout.write(json.dumps({'run_id': record.id, 'command': record.command,
                                     'identical': identical}, indent=2) + "\n")
        return EXIT_OK

    if args.config:
        cfg = load_config(args.config)
    elif args.command:
        cfg = config_from_args(args)
    else:
        raise SteeringError("No command given; see --help")

    text = execute(cfg)
    write_output(cfg, text)
    if ledger:
        database.record_run(ledger, cfg, text)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=config.log_level(), format='%(asctime)s - %(levelname)s - %(message)s')
    args = build_parser().parse_args(argv)
    try:
        return route_command(args)
    except EnumerationCapError as e:
        logging.error(f"Enumeration cap exceeded: {str(e)}")
        return EXIT_CAP
    except SteeringError as e:
        logging.error(f"Invalid input: {str(e)}")
        return EXIT_INVALID
    except Exception as e:
        logging.error(f"Unexpected error: {str(e)}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
