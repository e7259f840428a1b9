from django.apps import AppConfig


class ScenarioConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'scenario'
    verbose_name = 'Сценарии и оценка'
