from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management.base import BaseCommand

from voxseq.models import TrainingRun
from voxseq.training import train_to_files
from voxseq.utils.cli import add_train_arguments, command_errors, parse_schemes, train_config, worker_count

COLUMNS = ['scheme', 'initial_loss', 'final_loss', 'miou', 'geometry_iou']


class Command(BaseCommand):
    help = "Train once per ordering scheme with otherwise identical settings and tabulate the results."

    def add_arguments(self, parser):
        parser.add_argument('--schemes', required=True, help='Comma-separated scheme names')
        add_train_arguments(parser, with_scheme=False)
        parser.add_argument('--out-dir', help='Directory for per-scheme logs and parameters')
        parser.add_argument('--threads', type=int, default=None)
        parser.add_argument('--csv', help='Also write the table to this CSV file')

    def handle(self, *args, **options):
        schemes = parse_schemes(options['schemes'], bool(options['z_snake']))
        workers = worker_count(options['threads'])
        out_dir = Path(options['out_dir'] or settings.VOXSEQ_OUTPUT_DIR / 'ablation')
        rows = []
        for scheme in schemes:
            config = train_config(options, scheme=scheme.kind.value, z_snake=scheme.z_snake)
            run_dir = out_dir / str(scheme)
            with command_errors():
                run_dir.mkdir(parents=True, exist_ok=True)
                result = train_to_files(config, run_dir / 'train.jsonl', run_dir / 'params.npz', workers=workers)
            run = TrainingRun.from_result(result, run_dir / 'train.jsonl', run_dir / 'params.npz')
            run.full_clean()
            run.save()
            rows.append({'scheme': str(scheme), 'initial_loss': run.initial_loss, 'final_loss': run.final_loss,
                         'miou': run.miou, 'geometry_iou': run.geometry_iou})
            self.stderr.write(f"{scheme}: done")

        table = pd.DataFrame(rows, columns=COLUMNS)
        if options['csv']:
            table.to_csv(options['csv'], index=False, lineterminator='\n', float_format='%.6f')
        self.stdout.write(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
