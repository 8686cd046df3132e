from django.apps import AppConfig


class SidelinkConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'sidelink'
    verbose_name = 'Sidelink experiments'
