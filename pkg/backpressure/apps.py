from django.apps import AppConfig


class BackpressureConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'backpressure'
    verbose_name = 'Backpressure network simulator'
