"""Configure Django before pytest collects the Django-based test modules."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'labelbench.settings')
django.setup()
