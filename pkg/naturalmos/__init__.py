from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version('naturalmos')
except PackageNotFoundError:
    __version__ = 'unknown'
