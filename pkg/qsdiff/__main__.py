"""Entry point for python -m qsdiff."""

from qsdiff.cli import entrypoint

if __name__ == '__main__':
    entrypoint()
