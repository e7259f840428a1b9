from django.apps import AppConfig


class NlpConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'nlp'
    verbose_name = 'Нелинейная оптимизация'
