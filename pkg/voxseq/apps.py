from django.apps import AppConfig


class VoxseqConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'voxseq'
    verbose_name = 'Voxel sequences'
