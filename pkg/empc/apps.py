from django.apps import AppConfig


class EmpcConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'empc'
    verbose_name = 'Экономический MPC'
