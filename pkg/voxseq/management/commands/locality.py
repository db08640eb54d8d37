from django.core.management.base import BaseCommand

from voxseq.locality import compare_schemes, reports_csv
from voxseq.models import LocalityRecord
from voxseq.utils.cli import command_errors, parse_dims, parse_schemes


class Command(BaseCommand):
    help = "Compare 6-neighbor sequence distances of ordering schemes and print them as CSV."

    def add_arguments(self, parser):
        parser.add_argument('--dims', required=True, help='Grid size as WxHxD')
        parser.add_argument('--schemes', required=True, help='Comma-separated scheme names')
        parser.add_argument('--z-snake', action='store_true', help='Apply z-snake to height-prioritized schemes')
        parser.add_argument('--csv', help='Also write the CSV to this file')
        parser.add_argument('--per-axis', action='store_true', help='Append mean_x, mean_y, mean_z columns')
        parser.add_argument('--record', action='store_true', help='Store the reports in the database')

    def handle(self, *args, **options):
        dims = parse_dims(options['dims'])
        schemes = parse_schemes(options['schemes'], options['z_snake'])
        with command_errors():
            reports = compare_schemes(dims, schemes)
            body = reports_csv(reports, per_axis=options['per_axis'])
            if options['csv']:
                with open(options['csv'], 'w', newline='') as fh:
                    fh.write(body)
        self.stdout.write(body, ending='')

        if options['record']:
            for report in reports:
                record = LocalityRecord.from_report(report, z_snake=options['z_snake'])
                record.full_clean()
                record.save()
            self.stderr.write(self.style.SUCCESS(f"Recorded {len(reports)} locality reports"))
