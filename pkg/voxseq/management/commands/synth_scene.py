import zlib

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand

from voxseq.synth import DEFAULT_CHANNELS, DEFAULT_NOISE, generate_scene
from voxseq.utils.cli import command_errors, parse_dims
from voxseq.utils.formats import write_grid, write_labels


class Command(BaseCommand):
    help = "Generate a synthetic occupancy scene and write its features and labels as VOXG files."

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, required=True)
        parser.add_argument('--dims', default='16x16x8', help='Grid size as WxHxD')
        parser.add_argument('--classes', type=int, default=4)
        parser.add_argument('--channels', type=int, default=DEFAULT_CHANNELS)
        parser.add_argument('--noise', type=float, default=DEFAULT_NOISE)
        parser.add_argument('--features', required=True, help='Output path of the feature grid')
        parser.add_argument('--labels', required=True, help='Output path of the label grid')

    def handle(self, *args, **options):
        dims = parse_dims(options['dims'])
        dtype = np.dtype(settings.VOXSEQ_PRECISION)
        with command_errors():
            scene = generate_scene(options['seed'], dims, options['classes'], channels=options['channels'],
                                   noise=options['noise'], dtype=dtype)
            write_grid(options['features'], scene.features)
            write_labels(options['labels'], scene.labels)
            with open(options['features'], 'rb') as fh:
                crc = zlib.crc32(fh.read())
        counts = np.bincount(scene.labels.ravel(), minlength=options['classes'])
        self.stdout.write(f"Scene {scene.seed} over {dims}: class counts {counts.tolist()}")
        self.stdout.write(self.style.SUCCESS(f"Wrote {options['features']} (crc32 {crc:08x}) and {options['labels']}"))
