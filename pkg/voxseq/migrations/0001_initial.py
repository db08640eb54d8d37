# Generated by Django 5.0.2 on 2026-10-18 09:12

from django.db import migrations, models


SCHEME_CHOICES = [
    ('raster-xyz', 'raster-xyz'),
    ('raster-zxy', 'raster-zxy'),
    ('morton3d', 'morton3d'),
    ('hilbert3d', 'hilbert3d'),
    ('hp-hilbert2d', 'hp-hilbert2d'),
    ('hp-morton2d', 'hp-morton2d'),
    ('hp-raster2d', 'hp-raster2d'),
]


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='LocalityRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scheme', models.CharField(choices=SCHEME_CHOICES, max_length=32)),
                ('z_snake', models.BooleanField(default=False)),
                ('w', models.PositiveIntegerField()),
                ('h', models.PositiveIntegerField()),
                ('d', models.PositiveIntegerField()),
                ('mean', models.FloatField()),
                ('max', models.PositiveBigIntegerField()),
                ('p50', models.PositiveBigIntegerField()),
                ('p95', models.PositiveBigIntegerField()),
                ('pairs', models.PositiveBigIntegerField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', 'scheme'],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scheme', models.CharField(choices=SCHEME_CHOICES, max_length=32)),
                ('z_snake', models.BooleanField(default=False)),
                ('dims', models.CharField(max_length=50)),
                ('classes', models.PositiveSmallIntegerField()),
                ('steps', models.PositiveIntegerField()),
                ('lr', models.FloatField()),
                ('seed', models.PositiveBigIntegerField()),
                ('lambda_iou', models.FloatField(default=1.0)),
                ('initial_loss', models.FloatField()),
                ('final_loss', models.FloatField()),
                ('miou', models.FloatField(blank=True, help_text='Held-out mIoU after the last step', null=True)),
                ('geometry_iou', models.FloatField(blank=True, null=True)),
                ('log_path', models.CharField(blank=True, max_length=500)),
                ('params_path', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
