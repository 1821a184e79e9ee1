import time

__all__ = ['timed', 'pretty_duration']


class _Timed:
    def __init__(self):
        self.elapsed = 0.0
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *_):
        self.elapsed = time.perf_counter() - self._start

    def __str__(self):
        return pretty_duration(self.elapsed)


def timed():
    """Context manager which times its code block

    The elapsed time in seconds is available as the `elapsed` attribute after the block.

    Examples
    --------
    >>> with timed() as t:
    ...     pass
    >>> t.elapsed >= 0
    True
    """
    return _Timed()


def pretty_duration(seconds):
    """Short human-readable duration: milliseconds, seconds or `[h:]mm:ss`

    Examples
    --------
    >>> pretty_duration(2.1e-6)
    '0.00ms'
    >>> pretty_duration(2.1e-3)
    '2.1ms'
    >>> pretty_duration(2.1e-1)
    '0.21s'
    >>> pretty_duration(22.1)
    '22s'
    >>> pretty_duration(62.1)
    '1:02'
    >>> pretty_duration(6217.1)
    '1:43:37'
    """
    if seconds < 0.1:
        ms = seconds * 1000
        decimals = 2 if ms < 1 else 1 if ms < 10 else 0
        return "{:.{}f}ms".format(ms, decimals)
    if seconds < 60:
        decimals = 2 if seconds < 10 else 1 if seconds < 20 else 0
        return "{:.{}f}s".format(seconds, decimals)

    hours, rest = divmod(int(seconds), 3600)
    minutes, seconds = divmod(rest, 60)
    if hours:
        return "{}:{:02}:{:02}".format(hours, minutes, seconds)
    return "{}:{:02}".format(minutes, seconds)
