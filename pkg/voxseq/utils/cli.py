"""Argument parsing and error mapping shared by the management commands."""
from contextlib import contextmanager

import yaml
from django.conf import settings
from django.core.management.base import CommandError

from ..exceptions import ContractError, DivergenceError, FormatError, NumericError, RangeError
from ..grid import GridDims
from ..ordering import OrderingScheme
from ..training import TrainConfig

EXIT_USAGE = 2
EXIT_RUNTIME = 3


def usage_error(message):
    return CommandError(message, returncode=EXIT_USAGE)


def runtime_error(message):
    return CommandError(message, returncode=EXIT_RUNTIME)


@contextmanager
def command_errors():
    """Translate library errors into exit codes (2 usage, 3 runtime)."""
    try:
        yield
    except DivergenceError as exc:
        raise runtime_error(f"Training diverged at step {exc.step} (loss {exc.loss})") from exc
    except (NumericError, FormatError, OSError) as exc:
        raise runtime_error(str(exc)) from exc
    except (ContractError, RangeError) as exc:
        raise usage_error(str(exc)) from exc


def parse_dims(text):
    try:
        return GridDims.parse(text)
    except (ContractError, RangeError) as exc:
        raise usage_error(str(exc)) from None


def parse_scheme(text, z_snake=False):
    try:
        return OrderingScheme.parse(text.strip(), z_snake)
    except ContractError as exc:
        raise usage_error(str(exc)) from None


def parse_schemes(text, z_snake=False):
    names = [name for name in (text or '').split(',') if name.strip()]
    if not names:
        raise usage_error("Scheme list is empty.")
    return [parse_scheme(name, z_snake) for name in names]


def parse_int_list(text, what):
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise usage_error(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    if any(v < 1 for v in values):
        raise usage_error(f"{what} must be positive, got {text!r}")
    return values


def parse_count(text, what):
    values = parse_int_list(str(text), what)
    if len(values) != 1:
        raise usage_error(f"{what} must be a single positive integer, got {text!r}")
    return values[0]


def parse_seeds(text):
    """``A-B`` (inclusive), ``A`` or ``A,B,C``."""
    try:
        if '-' in text:
            start, end = (int(part) for part in text.split('-', 1))
            if end < start:
                raise ValueError
            return list(range(start, end + 1))
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise usage_error(f"Seeds must look like A-B, A or A,B,C; got {text!r}") from None


def worker_count(option=None):
    threads = settings.VOXSEQ_THREADS if option is None else option
    if threads < 0:
        raise usage_error(f"Thread count must be >= 0, got {threads}")
    return threads


# --- Training options ---------------------------------------------------------

TRAIN_FLAGS = [
    ('--steps', int, 'steps'),
    ('--lr', float, 'lr'),
    ('--seed', int, 'seed'),
    ('--dims', str, 'dims'),
    ('--classes', int, 'classes'),
    ('--batch-size', int, 'batch_size'),
    ('--groups', int, 'groups'),
    ('--blocks-per-group', int, 'blocks_per_group'),
    ('--base-width', int, 'base_width'),
    ('--state-dim', int, 'state_dim'),
    ('--channels', int, 'channels'),
    ('--lidar-channels', int, 'lidar_channels'),
    ('--noise', float, 'noise'),
    ('--lambda-iou', float, 'lambda_iou'),
    ('--eval-every', int, 'eval_every'),
    ('--eval-scenes', int, 'eval_scenes'),
    ('--precision', str, 'precision'),
]


def add_train_arguments(parser, with_scheme=True):
    parser.add_argument('--config', help='YAML or JSON file with training options')
    for flag, kind, dest in TRAIN_FLAGS:
        parser.add_argument(flag, type=kind, dest=dest, default=None)
    if with_scheme:
        parser.add_argument('--scheme', default=None, help='Ordering scheme, e.g. hp-hilbert2d')
    parser.add_argument('--z-snake', action='store_true', default=None, dest='z_snake')


def load_config_file(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise usage_error(f"Cannot read config file {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise usage_error(f"Config file {path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(data, dict):
        raise usage_error(f"Config file {path} must hold a mapping of options")
    return data


def train_config(options, **overrides):
    """Config file values, then command-line flags, then ``overrides``."""
    data = {'eval_seed_base': settings.VOXSEQ_EVAL_SEED_BASE, 'precision': settings.VOXSEQ_PRECISION,
            'ignore_label': settings.VOXSEQ_IGNORE_LABEL}
    if options.get('config'):
        data.update(load_config_file(options['config']))
    for _, _, dest in TRAIN_FLAGS:
        if options.get(dest) is not None:
            data[dest] = options[dest]
    if options.get('scheme') is not None:
        data['scheme'] = options['scheme']
    if options.get('z_snake'):
        data['z_snake'] = True
    data.update(overrides)
    try:
        return TrainConfig.from_dict(data)
    except (ContractError, RangeError, TypeError) as exc:
        raise usage_error(f"Invalid training options: {exc}") from None
