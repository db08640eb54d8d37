from django.core.management.base import BaseCommand

from voxseq.ordering import build_ordering
from voxseq.utils.cli import command_errors, parse_dims, parse_scheme
from voxseq.utils.formats import write_ordering


class Command(BaseCommand):
    help = "Build the ordering of a scheme over a WxHxD grid and write it as a VORD file."

    def add_arguments(self, parser):
        parser.add_argument('--scheme', required=True, help='raster-xyz, raster-zxy, morton3d, hilbert3d, '
                                                           'hp-hilbert2d, hp-morton2d or hp-raster2d')
        parser.add_argument('--dims', required=True, help='Grid size as WxHxD')
        parser.add_argument('--z-snake', action='store_true', help='Reverse z in every other column')
        parser.add_argument('--out', required=True, help='Output .vord path')

    def handle(self, *args, **options):
        scheme = parse_scheme(options['scheme'], options['z_snake'])
        dims = parse_dims(options['dims'])
        with command_errors():
            ordering = build_ordering(scheme, dims)
            write_ordering(options['out'], ordering)
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(ordering)} entries of {scheme} over {dims} to {options['out']}"
        ))
