import json
import time
import tracemalloc

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand

from voxseq.mamba import init_mamba_block, mamba_block_forward
from voxseq.utils.cli import command_errors, parse_count, parse_int_list, usage_error

DEFAULT_LENGTHS = ','.join(str(2 ** k) for k in range(12, 19))


def fit_slope(lengths, times):
    """Least-squares slope of log(time) against log(n)."""
    slope, _ = np.polyfit(np.log(lengths), np.log(times), 1)
    return float(slope)


class Command(BaseCommand):
    help = "Time the Mamba block forward pass over several sequence lengths and fit the log-log slope."

    def add_arguments(self, parser):
        parser.add_argument('--lengths', default=DEFAULT_LENGTHS, help='Comma-separated sequence lengths (>= 3)')
        parser.add_argument('--channels', default='16', help='Model width C')
        parser.add_argument('--repeats', default='3', help='Timed runs per length')
        parser.add_argument('--state-dim', type=int, default=8)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--memory', action='store_true', help='Also report the traced peak allocation')

    def handle(self, *args, **options):
        lengths = parse_int_list(options['lengths'], 'Lengths')
        if len(lengths) < 3:
            raise usage_error(f"Need at least 3 lengths to fit a slope, got {len(lengths)}")
        channels = parse_count(options['channels'], 'Channels')
        repeats = parse_count(options['repeats'], 'Repeats')
        dtype = np.dtype(settings.VOXSEQ_PRECISION)

        rng = np.random.default_rng(options['seed'])
        with command_errors():
            block = init_mamba_block(rng, channels, state_dim=options['state_dim'], dtype=dtype)
            means = []
            for n in lengths:
                v = rng.standard_normal((1, n, channels)).astype(dtype)
                mamba_block_forward(block, v[:, :min(n, 64)])
                samples = []
                for _ in range(repeats):
                    start = time.perf_counter_ns()
                    mamba_block_forward(block, v)
                    samples.append(time.perf_counter_ns() - start)
                row = {'n': n, 'mean_ns': float(np.mean(samples)), 'stddev_ns': float(np.std(samples))}
                if options['memory']:
                    tracemalloc.start()
                    mamba_block_forward(block, v)
                    row['peak_bytes'] = tracemalloc.get_traced_memory()[1]
                    tracemalloc.stop()
                means.append(row['mean_ns'])
                self.stdout.write(json.dumps(row))
        self.stdout.write(json.dumps({'slope': fit_slope(lengths, means)}))
