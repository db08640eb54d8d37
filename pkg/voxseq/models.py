import math

from django.core.exceptions import ValidationError
from django.db import models

from .ordering import Scheme

SCHEME_CHOICES = [(s.value, s.value) for s in Scheme]


class LocalityRecord(models.Model):
    scheme = models.CharField(max_length=32, choices=SCHEME_CHOICES)
    z_snake = models.BooleanField(default=False)
    w = models.PositiveIntegerField()
    h = models.PositiveIntegerField()
    d = models.PositiveIntegerField()
    mean = models.FloatField()
    max = models.PositiveBigIntegerField()
    p50 = models.PositiveBigIntegerField()
    p95 = models.PositiveBigIntegerField()
    pairs = models.PositiveBigIntegerField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at', 'scheme']

    def clean(self):
        if min(self.w, self.h, self.d) < 1:
            raise ValidationError("Grid sizes must be positive.")
        if not self.p50 <= self.p95 <= self.max:
            raise ValidationError("Percentiles must satisfy p50 <= p95 <= max.")
        expected = 3 * self.w * self.h * self.d - self.w * self.h - self.h * self.d - self.w * self.d
        if self.pairs != expected:
            raise ValidationError(f"A {self.dims} grid has {expected} adjacent pairs, not {self.pairs}.")

    @property
    def dims(self):
        return f"{self.w}x{self.h}x{self.d}"

    @classmethod
    def from_report(cls, report, z_snake=False):
        return cls(
            scheme=report.scheme.split('+')[0], z_snake=z_snake, w=report.w, h=report.h, d=report.d,
            mean=report.mean, max=report.max, p50=report.p50, p95=report.p95, pairs=report.pairs,
        )

    def __str__(self):
        return f"{self.scheme} on {self.dims}: mean {self.mean:.3f}"


class TrainingRun(models.Model):
    scheme = models.CharField(max_length=32, choices=SCHEME_CHOICES)
    z_snake = models.BooleanField(default=False)
    dims = models.CharField(max_length=50)
    classes = models.PositiveSmallIntegerField()
    steps = models.PositiveIntegerField()
    lr = models.FloatField()
    seed = models.PositiveBigIntegerField()
    lambda_iou = models.FloatField(default=1.0)
    initial_loss = models.FloatField()
    final_loss = models.FloatField()
    miou = models.FloatField(null=True, blank=True, help_text="Held-out mIoU after the last step")
    geometry_iou = models.FloatField(null=True, blank=True)
    log_path = models.CharField(max_length=500, blank=True)
    params_path = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def clean(self):
        if self.lr < 0:
            raise ValidationError("Learning rate must be non-negative.")
        if self.classes < 2:
            raise ValidationError("A run needs at least two classes.")
        for name in ('miou', 'geometry_iou'):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1].")

    @classmethod
    def from_result(cls, result, log_path='', params_path=''):
        config = result.config
        report = result.report
        return cls(
            scheme=config.scheme.value, z_snake=config.z_snake, dims=str(config.dims), classes=config.classes,
            steps=config.steps, lr=config.lr, seed=config.seed, lambda_iou=config.lambda_iou,
            initial_loss=result.initial_loss, final_loss=result.final_loss, miou=result.final_miou,
            geometry_iou=None if report is None or math.isnan(report.geometry_iou) else report.geometry_iou,
            log_path=str(log_path), params_path=str(params_path),
        )

    @property
    def loss_ratio(self):
        return self.final_loss / self.initial_loss if self.initial_loss else None

    def __str__(self):
        return f"{self.scheme} {self.dims} seed {self.seed} ({self.steps} steps)"
