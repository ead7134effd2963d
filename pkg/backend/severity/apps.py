from django.apps import AppConfig


class SeverityConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "severity"
    verbose_name = "Crash severity models"
