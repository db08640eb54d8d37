from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from voxseq.models import TrainingRun
from voxseq.training import train_to_files
from voxseq.utils.cli import add_train_arguments, command_errors, train_config, worker_count


class Command(BaseCommand):
    help = "Train the toy occupancy model on synthetic scenes; writes a JSONL log and a parameter file."

    def add_arguments(self, parser):
        add_train_arguments(parser)
        parser.add_argument('--out-dir', help='Directory for the log and parameter files '
                                              '(default: VOXSEQ_OUTPUT_DIR/<scheme>-seed<seed>)')
        parser.add_argument('--log', help='Log path (default: <out-dir>/train.jsonl)')
        parser.add_argument('--params', help='Parameter path (default: <out-dir>/params.npz)')
        parser.add_argument('--threads', type=int, default=None, help='Evaluation threads (0 = one per CPU)')
        parser.add_argument('--record', action='store_true', help='Store the run in the database')

    def handle(self, *args, **options):
        config = train_config(options)
        workers = worker_count(options['threads'])
        out_dir = Path(options['out_dir'] or settings.VOXSEQ_OUTPUT_DIR / f"{config.ordering}-seed{config.seed}")
        log_path = Path(options['log'] or out_dir / 'train.jsonl')
        params_path = Path(options['params'] or out_dir / 'params.npz')

        with command_errors():
            for path in (log_path, params_path):
                path.parent.mkdir(parents=True, exist_ok=True)
            result = train_to_files(config, log_path, params_path, workers=workers)

        self.stdout.write(f"Loss {result.initial_loss:.4f} -> {result.final_loss:.4f} over {config.steps} steps, "
                          f"held-out mIoU {result.final_miou}")
        if options['record']:
            run = TrainingRun.from_result(result, log_path, params_path)
            run.full_clean()
            run.save()
        self.stdout.write(self.style.SUCCESS(f"Wrote {log_path} and {params_path}"))
