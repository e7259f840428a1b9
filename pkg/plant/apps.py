from django.apps import AppConfig


class PlantConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'plant'
    verbose_name = 'Модель энергокомплекса'
