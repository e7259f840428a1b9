from django.apps import AppConfig


class DecompConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'decomp'
    verbose_name = 'Декомпозиция'
