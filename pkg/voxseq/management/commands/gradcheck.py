from django.core.management.base import BaseCommand

from voxseq.utils.cli import parse_count, runtime_error, usage_error
from voxseq.utils.gradcheck import CHECKS, TOLERANCE, run_checks


class Command(BaseCommand):
    help = "Compare analytic gradients with central finite differences on random small instances."

    def add_arguments(self, parser):
        parser.add_argument('--instances', default='20', help='Random instances per operation')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--checks', help=f"Comma-separated subset of: {', '.join(CHECKS)}")

    def handle(self, *args, **options):
        instances = parse_count(options['instances'], 'Instances')
        names = [n.strip() for n in options['checks'].split(',') if n.strip()] if options['checks'] else None
        if names is not None:
            unknown = [n for n in names if n not in CHECKS]
            if unknown or not names:
                raise usage_error(f"Unknown checks: {', '.join(unknown) or '(none given)'}")

        results = run_checks(names, instances=instances, seed=options['seed'])
        for result in results:
            status = self.style.SUCCESS('ok') if result.passed else self.style.ERROR('FAIL')
            self.stdout.write(f"{result.name:<16} max_rel_error={result.max_error:.3e} "
                              f"entries={result.entries} {status}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise runtime_error(f"Gradient check above {TOLERANCE:g} for: {', '.join(failed)}")
