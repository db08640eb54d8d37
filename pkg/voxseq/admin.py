from django.contrib import admin

from .models import LocalityRecord, TrainingRun


class LocalityRecordAdmin(admin.ModelAdmin):
    list_display = ('scheme', 'z_snake', 'dims', 'mean', 'max', 'p50', 'p95', 'pairs', 'created_at')
    list_filter = ('scheme', 'z_snake')


class TrainingRunAdmin(admin.ModelAdmin):
    list_display = ('scheme', 'dims', 'seed', 'steps', 'lr', 'initial_loss', 'final_loss', 'miou', 'created_at')
    list_filter = ('scheme', 'classes')
    search_fields = ('dims', 'log_path', 'params_path')
    fieldsets = (
        (None, {
            'fields': ('scheme', 'z_snake', 'dims', 'classes', 'seed')
        }),
        ('Optimisation', {
            'fields': ('steps', 'lr', 'lambda_iou', 'initial_loss', 'final_loss')
        }),
        ('Evaluation', {
            'fields': ('miou', 'geometry_iou')
        }),
        ('Artifacts', {
            'fields': ('log_path', 'params_path'),
            'classes': ('collapse',)
        }),
    )


admin.site.register(LocalityRecord, LocalityRecordAdmin)
admin.site.register(TrainingRun, TrainingRunAdmin)
