from django.apps import AppConfig


class AutolabelConfig(AppConfig):
    name = 'autolabel'
    verbose_name = 'Multi-agent LiDAR label pipeline'
