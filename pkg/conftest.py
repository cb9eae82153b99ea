import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'sidewalk_stack.settings')
django.setup()
