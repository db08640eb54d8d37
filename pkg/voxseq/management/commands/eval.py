import json

from django.core.management.base import BaseCommand

from voxseq.training import evaluate, load_model
from voxseq.utils.cli import command_errors, parse_seeds, worker_count


class Command(BaseCommand):
    help = "Evaluate saved parameters on synthetic scenes and print per-class IoU, mIoU and geometry IoU as JSON."

    def add_arguments(self, parser):
        parser.add_argument('--params', required=True, help='Parameter file written by train_toy')
        parser.add_argument('--seeds', help='Scene seeds as A-B, A or A,B,C (default: the held-out range '
                                            'the run evaluated on)')
        parser.add_argument('--threads', type=int, default=None, help='Evaluation threads (0 = one per CPU)')

    def handle(self, *args, **options):
        seeds = parse_seeds(options['seeds']) if options['seeds'] else None
        workers = worker_count(options['threads'])
        with command_errors():
            config, params = load_model(options['params'])
            report = evaluate(config, params, seeds=seeds, workers=workers)
        payload = report.as_dict()
        payload['scenes'] = len(seeds) if seeds is not None else config.eval_scenes
        self.stdout.write(json.dumps(payload))
        if not report.defined:
            self.stderr.write(self.style.WARNING("No labelled voxels evaluated; metrics are undefined"))
