from concurrent.futures import ThreadPoolExecutor

from django.conf import settings


def thread_count():
    return settings.AUTOLABEL.get('THREADS', 1)


def ordered_map(fn, items, threads=None):
    """``list(map(fn, items))``, fanned out over threads; results keep input order."""
    items = list(items)
    threads = threads or thread_count()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))
