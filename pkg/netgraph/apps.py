from django.apps import AppConfig


class NetgraphConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'netgraph'
    verbose_name = 'Граф динамики'
